#include "dtcal/ast.hpp"

#include <functional>
#include <map>
#include <sstream>

namespace dtcal {

namespace {

std::size_t combine(std::size_t seed, std::size_t value) {
    return seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

std::size_t hashStr(const std::string &s) { return std::hash<std::string>{}(s); }

std::size_t hashBound(const Bound &b) { return b ? combine(1, *b) : 0x51ed27; }

std::size_t hashSpec(const TemporalSpec &s) {
    std::size_t h = combine(s.ready, hashBound(s.timeout));
    h = combine(h, s.exec);
    return combine(h, hashBound(s.deadline));
}

std::size_t hashOptStr(const std::optional<std::string> &s) { return s ? hashStr(*s) : 0x77; }

std::size_t hashAction(const Action &a) {
    std::size_t h = combine(0xac7, a.index());
    return std::visit(
        [&](const auto &x) -> std::size_t {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, act::Empty>)
                return combine(h, x.exec);
            else if constexpr (std::is_same_v<T, act::Send>)
                return combine(combine(h, hashStr(x.channel)), hashStr(x.message));
            else if constexpr (std::is_same_v<T, act::Receive>)
                return combine(combine(h, hashStr(x.channel)), hashStr(x.pattern));
            else if constexpr (std::is_same_v<T, act::MoveRequest>) {
                h = combine(combine(h, static_cast<std::size_t>(x.kind)), hashStr(x.target));
                h = combine(h, hashOptStr(x.key));
                return combine(h, x.prio ? x.prio->level + 1 : 0);
            } else if constexpr (std::is_same_v<T, act::MovePermit>) {
                h = combine(combine(h, static_cast<std::size_t>(x.kind)), hashStr(x.subject));
                return combine(h, hashOptStr(x.key));
            } else if constexpr (std::is_same_v<T, act::New>)
                return combine(h, hashStr(x.def));
            else if constexpr (std::is_same_v<T, act::Kill>)
                return combine(h, hashStr(x.proc));
            else
                return h;
        },
        a);
}

std::size_t hashPtr(const TermPtr &t) { return t ? t->hash() : 0x3c1; }

std::size_t hashNode(const TermNode &node) {
    std::size_t h = combine(0x7e2, node.index());
    return std::visit(
        [&](const auto &x) -> std::size_t {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, term::Act>) {
                h = combine(h, hashAction(x.action));
                h = combine(h, x.temporal ? hashSpec(*x.temporal) : 0x11);
                if (x.period)
                    h = combine(combine(h, x.period->period), hashBound(x.period->reps));
                return h;
            } else if constexpr (std::is_same_v<T, term::Seq>)
                return combine(combine(h, hashPtr(x.first)), hashPtr(x.rest));
            else if constexpr (std::is_same_v<T, term::Choice> || std::is_same_v<T, term::Par>)
                return combine(combine(h, hashPtr(x.left)), hashPtr(x.right));
            else if constexpr (std::is_same_v<T, term::Nest>)
                return combine(combine(h, hashStr(x.def)), hashPtr(x.children));
            else if constexpr (std::is_same_v<T, term::Exception>)
                return combine(combine(h, hashPtr(x.body)), hashPtr(x.handler));
            else if constexpr (std::is_same_v<T, term::ChannelScope>)
                return combine(combine(h, hashStr(x.channel)), hashPtr(x.body));
            else if constexpr (std::is_same_v<T, term::WithPriority>)
                return combine(combine(h, x.level.level), hashPtr(x.body));
            else if constexpr (std::is_same_v<T, term::TimedProc>)
                return combine(combine(combine(h, hashPtr(x.body)), hashSpec(x.spec)),
                               x.deadlineOnly);
            else if constexpr (std::is_same_v<T, term::Repeat>)
                return combine(combine(combine(h, hashPtr(x.body)), x.period.period),
                               hashBound(x.period.reps));
            else if constexpr (std::is_same_v<T, term::Ref>)
                return combine(h, hashStr(x.def));
            else
                return h;
        },
        node);
}

bool sameNode(const TermNode &a, const TermNode &b) {
    if (a.index() != b.index())
        return false;
    return std::visit(
        [&](const auto &x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const T &y = std::get<T>(b);
            if constexpr (std::is_same_v<T, term::Act>)
                return x.action == y.action && x.temporal == y.temporal && x.period == y.period;
            else if constexpr (std::is_same_v<T, term::Seq>)
                return sameTerm(x.first, y.first) && sameTerm(x.rest, y.rest);
            else if constexpr (std::is_same_v<T, term::Choice> || std::is_same_v<T, term::Par>)
                return sameTerm(x.left, y.left) && sameTerm(x.right, y.right);
            else if constexpr (std::is_same_v<T, term::Nest>)
                return x.def == y.def && sameTerm(x.children, y.children);
            else if constexpr (std::is_same_v<T, term::Exception>)
                return sameTerm(x.body, y.body) && sameTerm(x.handler, y.handler);
            else if constexpr (std::is_same_v<T, term::ChannelScope>)
                return x.channel == y.channel && sameTerm(x.body, y.body);
            else if constexpr (std::is_same_v<T, term::WithPriority>)
                return x.level == y.level && sameTerm(x.body, y.body);
            else if constexpr (std::is_same_v<T, term::TimedProc>)
                return x.spec == y.spec && x.deadlineOnly == y.deadlineOnly &&
                       sameTerm(x.body, y.body);
            else if constexpr (std::is_same_v<T, term::Repeat>)
                return x.period == y.period && sameTerm(x.body, y.body);
            else if constexpr (std::is_same_v<T, term::Ref>)
                return x.def == y.def;
            else
                return true;
        },
        a);
}

std::string boundText(const Bound &b) { return b ? std::to_string(*b) : "-"; }

} // namespace

std::string_view moveKindName(MoveKind kind) {
    switch (kind) {
    case MoveKind::In:
        return "in";
    case MoveKind::Out:
        return "out";
    case MoveKind::Get:
        return "get";
    case MoveKind::Put:
        return "put";
    }
    return "?";
}

std::string describe(const Action &action) {
    std::ostringstream os;
    std::visit(
        [&](const auto &x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, act::Empty>)
                os << "nil(" << x.exec << ')';
            else if constexpr (std::is_same_v<T, act::Send>)
                os << x.channel << "!(" << x.message << ')';
            else if constexpr (std::is_same_v<T, act::Receive>)
                os << x.channel << "?(" << x.pattern << ')';
            else if constexpr (std::is_same_v<T, act::MoveRequest>) {
                os << moveKindName(x.kind);
                if (x.prio)
                    os << " @" << x.prio->level;
                if (x.key)
                    os << " #" << *x.key;
                os << ' ' << x.target;
            } else if constexpr (std::is_same_v<T, act::MovePermit>) {
                os << "acc " << moveKindName(x.kind);
                if (x.key)
                    os << " #" << *x.key;
                os << ' ' << x.subject;
            } else if constexpr (std::is_same_v<T, act::New>)
                os << "new " << x.def;
            else if constexpr (std::is_same_v<T, act::Kill>)
                os << "kill " << x.proc;
            else
                os << "exit";
        },
        action);
    return os.str();
}

std::string describe(const TemporalSpec &spec) {
    return "[" + std::to_string(spec.ready) + "," + boundText(spec.timeout) + "," +
           std::to_string(spec.exec) + "," + boundText(spec.deadline) + "]";
}

std::string describe(const PeriodSpec &spec) {
    return "^(" + std::to_string(spec.period) + "," + (spec.reps ? std::to_string(*spec.reps) : "inf") +
           ")";
}

bool isSynchronous(const Action &action) {
    return std::holds_alternative<act::Send>(action) || std::holds_alternative<act::Receive>(action) ||
           std::holds_alternative<act::MoveRequest>(action) ||
           std::holds_alternative<act::MovePermit>(action);
}

Term::Term(TermNode node) : node_(std::move(node)), hash_(hashNode(node_)) {}

bool sameTerm(const TermPtr &a, const TermPtr &b) {
    if (a == b)
        return true;
    if (!a || !b)
        return false;
    if (a->hash() != b->hash())
        return false;
    return sameNode(a->node(), b->node());
}

namespace mk {

TermPtr act(Action action, std::optional<TemporalSpec> temporal, std::optional<PeriodSpec> period) {
    return std::make_shared<const Term>(term::Act{std::move(action), temporal, period});
}
TermPtr seq(TermPtr first, TermPtr rest) {
    return std::make_shared<const Term>(term::Seq{std::move(first), std::move(rest)});
}
TermPtr choice(TermPtr left, TermPtr right) {
    return std::make_shared<const Term>(term::Choice{std::move(left), std::move(right)});
}
TermPtr par(TermPtr left, TermPtr right) {
    return std::make_shared<const Term>(term::Par{std::move(left), std::move(right)});
}
TermPtr nest(std::string def, TermPtr children) {
    return std::make_shared<const Term>(term::Nest{std::move(def), std::move(children)});
}
TermPtr exception(TermPtr body, TermPtr handler) {
    return std::make_shared<const Term>(term::Exception{std::move(body), std::move(handler)});
}
TermPtr scope(std::string channel, TermPtr body) {
    return std::make_shared<const Term>(term::ChannelScope{std::move(channel), std::move(body)});
}
TermPtr priority(Priority level, TermPtr body) {
    return std::make_shared<const Term>(term::WithPriority{level, std::move(body)});
}
TermPtr timed(TermPtr body, TemporalSpec spec, bool deadlineOnly) {
    return std::make_shared<const Term>(term::TimedProc{std::move(body), spec, deadlineOnly});
}
TermPtr dl(TermPtr body, Ticks deadline) {
    TemporalSpec spec;
    spec.deadline = deadline;
    return timed(std::move(body), spec, true);
}
TermPtr repeat(TermPtr body, PeriodSpec period) {
    return std::make_shared<const Term>(term::Repeat{std::move(body), period});
}
TermPtr ref(std::string def) { return std::make_shared<const Term>(term::Ref{std::move(def)}); }
TermPtr stop() {
    static const TermPtr instance = std::make_shared<const Term>(term::Stop{});
    return instance;
}

} // namespace mk

const Definition *SpecFile::find(std::string_view name) const {
    for (const auto &d : definitions)
        if (d.name == name)
            return &d;
    return nullptr;
}

bool sameSpec(const SpecFile &a, const SpecFile &b) {
    if (a.root != b.root || a.definitions.size() != b.definitions.size())
        return false;
    for (std::size_t i = 0; i < a.definitions.size(); ++i) {
        if (a.definitions[i].name != b.definitions[i].name ||
            !sameTerm(a.definitions[i].body, b.definitions[i].body))
            return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// validate

namespace {

class Validator {
public:
    explicit Validator(const SpecFile &spec) : spec_(spec) {}

    Diagnostics run() {
        if (spec_.definitions.empty()) {
            error("specification has no definitions", {});
            return std::move(diags_);
        }
        if (!spec_.find(spec_.root))
            error("root definition '" + spec_.root + "' is not defined", spec_.definitions.front().span);

        for (const auto &def : spec_.definitions) {
            current_ = &def;
            std::optional<Priority> creator;
            if (const auto *wp = def.body->as<term::WithPriority>())
                creator = wp->level;
            walk(def.body, false, creator);
        }
        checkRecursion();
        return std::move(diags_);
    }

private:
    void error(std::string message, SourceSpan span) {
        diags_.push_back({Severity::Error, std::move(message), std::move(span)});
    }

    void requireDefined(const std::string &name, std::string_view what) {
        if (!spec_.find(name))
            error(std::string(what) + " '" + name + "' is not defined", current_->span);
    }

    void walk(const TermPtr &t, bool guarded, std::optional<Priority> creator) {
        if (!t)
            return;
        std::visit(
            [&](const auto &x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, term::Act>) {
                    checkAct(x, creator);
                } else if constexpr (std::is_same_v<T, term::Seq>) {
                    walk(x.first, guarded, creator);
                    walk(x.rest, guarded || mustAct(x.first), creator);
                } else if constexpr (std::is_same_v<T, term::Choice> || std::is_same_v<T, term::Par>) {
                    walk(x.left, guarded, creator);
                    walk(x.right, guarded, creator);
                } else if constexpr (std::is_same_v<T, term::Nest>) {
                    requireDefined(x.def, "process");
                    if (!guarded)
                        edges_[current_->name].insert(x.def);
                    walk(x.children, guarded, creator);
                } else if constexpr (std::is_same_v<T, term::Exception>) {
                    walk(x.body, guarded, creator);
                    walk(x.handler, guarded, creator);
                } else if constexpr (std::is_same_v<T, term::ChannelScope>) {
                    walk(x.body, guarded, creator);
                } else if constexpr (std::is_same_v<T, term::WithPriority>) {
                    walk(x.body, guarded, x.level);
                } else if constexpr (std::is_same_v<T, term::TimedProc>) {
                    if (x.spec.deadline && *x.spec.deadline == 0)
                        error("process deadline must be positive", current_->span);
                    walk(x.body, guarded, creator);
                } else if constexpr (std::is_same_v<T, term::Repeat>) {
                    checkPeriod(x.period);
                    walk(x.body, guarded, creator);
                } else if constexpr (std::is_same_v<T, term::Ref>) {
                    requireDefined(x.def, "process");
                    if (!guarded)
                        edges_[current_->name].insert(x.def);
                }
            },
            t->node());
    }

    void checkPeriod(const PeriodSpec &p) {
        if (p.period == 0)
            error("period must be at least 1", current_->span);
        if (p.reps && *p.reps == 0)
            error("repetition count must be at least 1", current_->span);
    }

    void checkAct(const term::Act &a, std::optional<Priority> creator) {
        if (a.temporal && a.temporal->deadline && *a.temporal->deadline < a.temporal->ready)
            error("deadline " + std::to_string(*a.temporal->deadline) + " < ready " +
                      std::to_string(a.temporal->ready) + " in " + describe(a.action),
                  current_->span);
        if (a.period)
            checkPeriod(*a.period);
        if (const auto *n = std::get_if<act::New>(&a.action)) {
            requireDefined(n->def, "process");
            const Definition *target = spec_.find(n->def);
            if (target && creator) {
                if (const auto *wp = target->body->as<term::WithPriority>();
                    wp && wp->level.higherThan(*creator))
                    error("new " + n->def + " would outrank its creator (priority " +
                              std::to_string(wp->level.level) + " vs " +
                              std::to_string(creator->level) + ")",
                          current_->span);
            }
        } else if (const auto *k = std::get_if<act::Kill>(&a.action)) {
            requireDefined(k->proc, "process");
        }
    }

    // True when every way of running t performs at least one action of its own.
    bool mustAct(const TermPtr &t) {
        std::set<std::string> visiting;
        return mustAct(t, visiting);
    }

    bool mustAct(const TermPtr &t, std::set<std::string> &visiting) {
        if (!t)
            return false;
        return std::visit(
            [&](const auto &x) -> bool {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, term::Act>)
                    return true;
                else if constexpr (std::is_same_v<T, term::Seq>)
                    return mustAct(x.first, visiting) || mustAct(x.rest, visiting);
                else if constexpr (std::is_same_v<T, term::Choice>)
                    return mustAct(x.left, visiting) && mustAct(x.right, visiting);
                else if constexpr (std::is_same_v<T, term::Par>)
                    return mustAct(x.left, visiting) || mustAct(x.right, visiting);
                else if constexpr (std::is_same_v<T, term::Exception> ||
                                   std::is_same_v<T, term::ChannelScope> ||
                                   std::is_same_v<T, term::WithPriority> ||
                                   std::is_same_v<T, term::TimedProc> ||
                                   std::is_same_v<T, term::Repeat>)
                    return mustAct(x.body, visiting);
                else if constexpr (std::is_same_v<T, term::Ref>) {
                    const Definition *d = spec_.find(x.def);
                    if (!d || !visiting.insert(x.def).second)
                        return false;
                    bool result = mustAct(d->body, visiting);
                    visiting.erase(x.def);
                    return result;
                } else
                    return false;
            },
            t->node());
    }

    // Tarjan-free cycle report: a definition is unguarded-recursive when it can
    // reach itself through unguarded references.
    void checkRecursion() {
        for (const auto &def : spec_.definitions) {
            std::set<std::string> seen;
            std::vector<std::string> stack{def.name};
            bool cyclic = false;
            while (!stack.empty() && !cyclic) {
                std::string cur = stack.back();
                stack.pop_back();
                auto it = edges_.find(cur);
                if (it == edges_.end())
                    continue;
                for (const auto &next : it->second) {
                    if (next == def.name) {
                        cyclic = true;
                        break;
                    }
                    if (seen.insert(next).second)
                        stack.push_back(next);
                }
            }
            if (cyclic)
                error("unguarded recursion at " + def.name, def.span);
        }
    }

    const SpecFile &spec_;
    const Definition *current_ = nullptr;
    std::map<std::string, std::set<std::string>> edges_;
    Diagnostics diags_;
};

} // namespace

Diagnostics validate(const SpecFile &spec) { return Validator(spec).run(); }

// ---------------------------------------------------------------------------
// canonicalize

TermPtr canonicalize(const TermPtr &t) {
    if (!t)
        return t;
    return std::visit(
        [&](const auto &x) -> TermPtr {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, term::Act>) {
                if (const auto *e = std::get_if<act::Empty>(&x.action)) {
                    Ticks exec = x.temporal ? x.temporal->exec : e->exec;
                    return mk::act(act::Empty{exec}, std::nullopt, x.period);
                }
                return mk::act(x.action, x.temporal.value_or(TemporalSpec::defaults()), x.period);
            } else if constexpr (std::is_same_v<T, term::Seq>)
                return mk::seq(canonicalize(x.first), canonicalize(x.rest));
            else if constexpr (std::is_same_v<T, term::Choice>)
                return mk::choice(canonicalize(x.left), canonicalize(x.right));
            else if constexpr (std::is_same_v<T, term::Par>)
                return mk::par(canonicalize(x.left), canonicalize(x.right));
            else if constexpr (std::is_same_v<T, term::Nest>)
                return mk::nest(x.def, canonicalize(x.children));
            else if constexpr (std::is_same_v<T, term::Exception>)
                return mk::exception(canonicalize(x.body), canonicalize(x.handler));
            else if constexpr (std::is_same_v<T, term::ChannelScope>)
                return mk::scope(x.channel, canonicalize(x.body));
            else if constexpr (std::is_same_v<T, term::WithPriority>)
                return mk::priority(x.level, canonicalize(x.body));
            else if constexpr (std::is_same_v<T, term::TimedProc>) {
                TermPtr body = canonicalize(x.body);
                if (!x.spec.deadline)
                    return body;
                return mk::dl(body, *x.spec.deadline);
            } else if constexpr (std::is_same_v<T, term::Repeat>)
                return mk::repeat(canonicalize(x.body), x.period);
            else
                return t;
        },
        t->node());
}

SpecFile canonicalize(const SpecFile &spec) {
    SpecFile out = spec;
    for (auto &def : out.definitions)
        def.body = canonicalize(def.body);
    return out;
}

// ---------------------------------------------------------------------------
// freeChannels

namespace {

void collectChannels(const TermPtr &t, std::set<std::string> &bound, std::set<std::string> &out) {
    if (!t)
        return;
    std::visit(
        [&](const auto &x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, term::Act>) {
                if (const auto *s = std::get_if<act::Send>(&x.action)) {
                    if (!bound.count(s->channel))
                        out.insert(s->channel);
                } else if (const auto *r = std::get_if<act::Receive>(&x.action)) {
                    if (!bound.count(r->channel))
                        out.insert(r->channel);
                }
            } else if constexpr (std::is_same_v<T, term::Seq>) {
                collectChannels(x.first, bound, out);
                collectChannels(x.rest, bound, out);
            } else if constexpr (std::is_same_v<T, term::Choice> || std::is_same_v<T, term::Par>) {
                collectChannels(x.left, bound, out);
                collectChannels(x.right, bound, out);
            } else if constexpr (std::is_same_v<T, term::Nest>) {
                collectChannels(x.children, bound, out);
            } else if constexpr (std::is_same_v<T, term::Exception>) {
                collectChannels(x.body, bound, out);
                collectChannels(x.handler, bound, out);
            } else if constexpr (std::is_same_v<T, term::ChannelScope>) {
                bool fresh = bound.insert(x.channel).second;
                collectChannels(x.body, bound, out);
                if (fresh)
                    bound.erase(x.channel);
            } else if constexpr (std::is_same_v<T, term::WithPriority> ||
                                 std::is_same_v<T, term::TimedProc> ||
                                 std::is_same_v<T, term::Repeat>) {
                collectChannels(x.body, bound, out);
            }
        },
        t->node());
}

} // namespace

std::set<std::string> freeChannels(const TermPtr &term) {
    std::set<std::string> bound, out;
    collectChannels(term, bound, out);
    return out;
}

} // namespace dtcal
