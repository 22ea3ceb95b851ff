#include "dtcal/parser.hpp"

#include <sstream>

namespace dtcal {

namespace {

// Binding levels, loosest first. Basic terms never need parentheses.
enum Level { kChoice = 1, kPar = 2, kSeq = 3, kUnary = 4, kBasic = 5 };

int level(const TermPtr &t) {
    return std::visit(
        [](const auto &x) -> int {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, term::Choice>)
                return kChoice;
            else if constexpr (std::is_same_v<T, term::Par>)
                return kPar;
            else if constexpr (std::is_same_v<T, term::Seq>)
                return kSeq;
            else if constexpr (std::is_same_v<T, term::Exception> || std::is_same_v<T, term::Repeat>)
                return kUnary;
            else if constexpr (std::is_same_v<T, term::TimedProc>)
                return x.deadlineOnly ? kBasic : kUnary;
            else if constexpr (std::is_same_v<T, term::Act>)
                return (x.temporal || x.period) ? kUnary : kBasic;
            else
                return kBasic;
        },
        t->node());
}

class Renderer {
public:
    std::string str() const { return os_.str(); }

    void term(const TermPtr &t) {
        std::visit([&](const auto &x) { node(x); }, t->node());
    }

private:
    void wrapped(const TermPtr &t, bool parens) {
        if (parens)
            os_ << '(';
        term(t);
        if (parens)
            os_ << ')';
    }

    void node(const term::Act &a) {
        os_ << describe(a.action);
        if (a.temporal)
            os_ << describe(*a.temporal);
        if (a.period)
            os_ << describe(*a.period);
    }
    void node(const term::Seq &s) {
        wrapped(s.first, level(s.first) < kUnary);
        os_ << " . ";
        wrapped(s.rest, level(s.rest) < kSeq);
    }
    void node(const term::Choice &c) {
        term(c.left);
        os_ << " + ";
        wrapped(c.right, level(c.right) <= kChoice);
    }
    void node(const term::Par &p) {
        wrapped(p.left, level(p.left) < kPar);
        os_ << " | ";
        wrapped(p.right, level(p.right) <= kPar);
    }
    void node(const term::Nest &n) {
        os_ << n.def << '[';
        if (n.children)
            term(n.children);
        os_ << ']';
    }
    void node(const term::Exception &e) {
        // The body is a basic with optional suffixes; a nested exception needs parens.
        wrapped(e.body, level(e.body) < kUnary || e.body->is<term::Exception>());
        os_ << " \\ ";
        wrapped(e.handler, level(e.handler) < kBasic);
    }
    void node(const term::ChannelScope &s) {
        os_ << "scope " << s.channel << " in ";
        wrapped(s.body, level(s.body) < kBasic);
    }
    void node(const term::WithPriority &p) {
        os_ << '@' << p.level.level << ' ';
        wrapped(p.body, level(p.body) < kBasic);
    }
    void node(const term::TimedProc &t) {
        if (t.deadlineOnly && t.spec.deadline) {
            os_ << "dl(" << *t.spec.deadline << ") ";
            wrapped(t.body, level(t.body) < kBasic);
            return;
        }
        wrapped(t.body, true);
        os_ << describe(t.spec);
    }
    void node(const term::Repeat &r) {
        wrapped(r.body, true);
        os_ << describe(r.period);
    }
    void node(const term::Ref &r) { os_ << r.def; }
    void node(const term::Stop &) { os_ << "stop"; }

    std::ostringstream os_;
};

} // namespace

std::string renderTerm(const TermPtr &term) {
    Renderer r;
    r.term(term);
    return r.str();
}

std::string render(const SpecFile &spec) {
    std::ostringstream os;
    // The root is the first definition in source; keep it first.
    const Definition *root = spec.find(spec.root);
    if (root)
        os << root->name << " := " << renderTerm(root->body) << ";\n";
    for (const auto &def : spec.definitions) {
        if (&def == root)
            continue;
        os << def.name << " := " << renderTerm(def.body) << ";\n";
    }
    return os.str();
}

} // namespace dtcal
