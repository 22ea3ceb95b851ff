#include "dtcal/parser.hpp"

#include <map>
#include <sstream>
#include <stdexcept>

namespace dtcal {

namespace {

std::string quote(const std::string &s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\')
            out += '\\';
        out += c;
    }
    out += '"';
    return out;
}

// ---------------------------------------------------------------------------
// In-the-large view

struct ItlNode {
    std::string id;
    std::string def;
    TermPtr behaviour;
    std::vector<std::size_t> children;
};

struct ChannelUse {
    std::set<std::string> sends;
    std::set<std::string> receives;
};

void collectUse(const TermPtr &t, ChannelUse &use) {
    if (!t)
        return;
    std::visit(
        [&](const auto &x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, term::Act>) {
                if (const auto *s = std::get_if<act::Send>(&x.action))
                    use.sends.insert(s->channel);
                else if (const auto *r = std::get_if<act::Receive>(&x.action))
                    use.receives.insert(r->channel);
            } else if constexpr (std::is_same_v<T, term::Seq>) {
                collectUse(x.first, use);
                collectUse(x.rest, use);
            } else if constexpr (std::is_same_v<T, term::Choice> || std::is_same_v<T, term::Par>) {
                collectUse(x.left, use);
                collectUse(x.right, use);
            } else if constexpr (std::is_same_v<T, term::Exception>) {
                collectUse(x.body, use);
                collectUse(x.handler, use);
            } else if constexpr (std::is_same_v<T, term::ChannelScope> ||
                                 std::is_same_v<T, term::WithPriority> ||
                                 std::is_same_v<T, term::TimedProc> ||
                                 std::is_same_v<T, term::Repeat>) {
                collectUse(x.body, use);
            }
        },
        t->node());
}

class ItlBuilder {
public:
    explicit ItlBuilder(const SpecFile &spec) : spec_(spec) {}

    std::string build() {
        std::vector<std::size_t> top;
        if (const Definition *root = spec_.find(spec_.root))
            decompose(root->body, root->name, top);

        std::ostringstream os;
        os << "digraph ITL {\n  compound=true;\n  node [shape=box];\n";
        for (std::size_t i : top)
            emit(os, i, 1);

        std::vector<ChannelUse> uses(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            collectUse(nodes_[i].behaviour, uses[i]);
        std::set<std::string> channels;
        for (const auto &u : uses) {
            channels.insert(u.sends.begin(), u.sends.end());
            channels.insert(u.receives.begin(), u.receives.end());
        }
        for (const auto &c : channels) {
            for (std::size_t i = 0; i < nodes_.size(); ++i) {
                for (std::size_t j = i + 1; j < nodes_.size(); ++j) {
                    bool shared = (uses[i].sends.count(c) && uses[j].receives.count(c)) ||
                                  (uses[i].receives.count(c) && uses[j].sends.count(c));
                    if (shared)
                        os << "  " << quote(nodes_[i].id) << " -> " << quote(nodes_[j].id)
                           << " [label=" << quote(c) << ", dir=none];\n";
                }
            }
        }
        os << "}\n";
        return os.str();
    }

private:
    std::size_t addNode(const std::string &def, TermPtr behaviour) {
        int &count = seen_[def];
        ++count;
        std::string id = count == 1 ? def : def + "_" + std::to_string(count);
        nodes_.push_back({id, def, std::move(behaviour), {}});
        return nodes_.size() - 1;
    }

    void decompose(const TermPtr &t, const std::string &owner, std::vector<std::size_t> &out) {
        if (!t)
            return;
        if (const auto *p = t->as<term::Par>()) {
            decompose(p->left, owner, out);
            decompose(p->right, owner, out);
        } else if (const auto *n = t->as<term::Nest>()) {
            const Definition *d = spec_.find(n->def);
            std::size_t idx = addNode(n->def, d ? d->body : nullptr);
            std::vector<std::size_t> kids;
            decompose(n->children, n->def, kids);
            nodes_[idx].children = kids;
            out.push_back(idx);
        } else if (const auto *r = t->as<term::Ref>()) {
            const Definition *d = spec_.find(r->def);
            out.push_back(addNode(r->def, d ? d->body : nullptr));
        } else {
            out.push_back(addNode(owner, t));
        }
    }

    void emit(std::ostream &os, std::size_t i, int depth) {
        std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
        const ItlNode &n = nodes_[i];
        if (n.children.empty()) {
            os << pad << quote(n.id) << ";\n";
            return;
        }
        os << pad << "subgraph " << quote("cluster_" + n.id) << " {\n";
        os << pad << "  label=" << quote(n.def) << ";\n";
        os << pad << "  " << quote(n.id) << " [shape=ellipse];\n";
        for (std::size_t c : n.children)
            emit(os, c, depth + 1);
        os << pad << "}\n";
    }

    const SpecFile &spec_;
    std::vector<ItlNode> nodes_;
    std::map<std::string, int> seen_;
};

// ---------------------------------------------------------------------------
// In-the-small view

std::string actionKind(const Action &a) {
    return std::visit(
        [](const auto &x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, act::Empty>)
                return "Empty";
            else if constexpr (std::is_same_v<T, act::Send>)
                return "Send";
            else if constexpr (std::is_same_v<T, act::Receive>)
                return "Receive";
            else if constexpr (std::is_same_v<T, act::MoveRequest>) {
                std::string k(moveKindName(x.kind));
                k[0] = static_cast<char>(std::toupper(k[0]));
                return k + "R";
            } else if constexpr (std::is_same_v<T, act::MovePermit>) {
                std::string k(moveKindName(x.kind));
                k[0] = static_cast<char>(std::toupper(k[0]));
                return k + "P";
            } else if constexpr (std::is_same_v<T, act::New>)
                return "New";
            else if constexpr (std::is_same_v<T, act::Kill>)
                return "Kill";
            else
                return "Exit";
        },
        a);
}

class ItsBuilder {
public:
    struct Span {
        std::string entry;
        std::string exit;
    };

    std::string build(const Definition &def) {
        std::string start = node("Start", "circle");
        std::string end = node("End", "doublecircle");
        Span body = walk(def.body);
        edge(start, body.entry);
        edge(body.exit, end);

        std::ostringstream os;
        os << "digraph " << quote("ITS_" + def.name) << " {\n";
        os << nodes_.str() << edges_.str() << "}\n";
        return os.str();
    }

private:
    std::string node(const std::string &label, const std::string &shape) {
        std::string id = "n" + std::to_string(next_++);
        nodes_ << "  " << id << " [label=" << quote(label) << ", shape=" << shape << "];\n";
        return id;
    }

    void edge(const std::string &a, const std::string &b, const std::string &attrs = {}) {
        edges_ << "  " << a << " -> " << b;
        if (!attrs.empty())
            edges_ << " [" << attrs << ']';
        edges_ << ";\n";
    }

    template <class Node>
    static void flatten(const TermPtr &t, std::vector<TermPtr> &out) {
        if (const auto *n = t->as<Node>()) {
            flatten<Node>(n->left, out);
            flatten<Node>(n->right, out);
        } else {
            out.push_back(t);
        }
    }

    Span fan(const std::vector<TermPtr> &arms, const std::string &open, const std::string &close,
             const std::string &shape) {
        std::string split = node(open, shape);
        std::string join = node(close, shape);
        for (const auto &arm : arms) {
            Span s = walk(arm);
            edge(split, s.entry);
            edge(s.exit, join);
        }
        return {split, join};
    }

    Span walk(const TermPtr &t) {
        return std::visit(
            [&](const auto &x) -> Span {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, term::Act>) {
                    std::string label = actionKind(x.action) + "\\n" + describe(x.action);
                    if (!std::holds_alternative<act::Empty>(x.action))
                        label += " " + describe(x.temporal.value_or(TemporalSpec::defaults()));
                    if (x.period)
                        label += describe(*x.period);
                    std::string n = node(label, "box");
                    return {n, n};
                } else if constexpr (std::is_same_v<T, term::Seq>) {
                    Span a = walk(x.first);
                    Span b = walk(x.rest);
                    edge(a.exit, b.entry);
                    return {a.entry, b.exit};
                } else if constexpr (std::is_same_v<T, term::Choice>) {
                    std::vector<TermPtr> arms;
                    flatten<term::Choice>(t, arms);
                    return fan(arms, "+", "+", "diamond");
                } else if constexpr (std::is_same_v<T, term::Par>) {
                    std::vector<TermPtr> arms;
                    flatten<term::Par>(t, arms);
                    return fan(arms, "fork", "join", "invtriangle");
                } else if constexpr (std::is_same_v<T, term::Exception>) {
                    Span body = walk(x.body);
                    Span handler = walk(x.handler);
                    std::string join = node("", "point");
                    edge(body.entry, handler.entry, "style=dashed, label=\"\\\\\"");
                    edge(body.exit, join);
                    edge(handler.exit, join);
                    return {body.entry, join};
                } else if constexpr (std::is_same_v<T, term::Nest>) {
                    std::string n = node("Nest\\n" + x.def + "[...]", "component");
                    return {n, n};
                } else if constexpr (std::is_same_v<T, term::Ref>) {
                    std::string n = node("Process\\n" + x.def, "component");
                    return {n, n};
                } else if constexpr (std::is_same_v<T, term::Stop>) {
                    std::string n = node("stop", "octagon");
                    return {n, n};
                } else if constexpr (std::is_same_v<T, term::Repeat>) {
                    Span body = walk(x.body);
                    edge(body.exit, body.entry, "style=dotted, label=" + quote(describe(x.period)));
                    return body;
                } else {
                    // scope, priority and timed wrappers do not change the flow.
                    return walk(x.body);
                }
            },
            t->node());
    }

    std::ostringstream nodes_;
    std::ostringstream edges_;
    int next_ = 0;
};

} // namespace

std::string exportItl(const SpecFile &spec) { return ItlBuilder(spec).build(); }

std::string exportIts(const SpecFile &spec, std::string_view defName) {
    const Definition *def = spec.find(defName);
    if (!def)
        throw std::invalid_argument("unknown definition '" + std::string(defName) + "'");
    return ItsBuilder().build(*def);
}

} // namespace dtcal
