#include "dtcal/semantics.hpp"

#include <algorithm>
#include <cassert>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dtcal {

namespace {

std::size_t combine(std::size_t seed, std::size_t value) {
    return seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}
std::size_t hashBound(const Bound &b) { return b ? combine(3, *b) : 0x2f1; }
std::size_t hashTerm(const TermPtr &t) { return t ? t->hash() : 0x91; }
std::size_t hashNodePtr(const NodePtr &n) { return n ? n->hash() : 0x92; }
std::size_t hashStr(const std::string &s) { return std::hash<std::string>{}(s); }

std::size_t hashAction(const Action &a) {
    std::size_t h = combine(0xac7, a.index());
    std::visit(
        [&](const auto &x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, act::Empty>)
                h = combine(h, x.exec);
            else if constexpr (std::is_same_v<T, act::Send>)
                h = combine(combine(h, hashStr(x.channel)), hashStr(x.message));
            else if constexpr (std::is_same_v<T, act::Receive>)
                h = combine(combine(h, hashStr(x.channel)), hashStr(x.pattern));
            else if constexpr (std::is_same_v<T, act::MoveRequest>)
                h = combine(combine(combine(h, static_cast<std::size_t>(x.kind)), hashStr(x.target)),
                            x.key ? hashStr(*x.key) : 1);
            else if constexpr (std::is_same_v<T, act::MovePermit>)
                h = combine(combine(combine(h, static_cast<std::size_t>(x.kind)), hashStr(x.subject)),
                            x.key ? hashStr(*x.key) : 1);
            else if constexpr (std::is_same_v<T, act::New>)
                h = combine(h, hashStr(x.def));
            else if constexpr (std::is_same_v<T, act::Kill>)
                h = combine(h, hashStr(x.proc));
        },
        a);
    return h;
}

std::size_t hashRt(const rt::NodeVariant &v) {
    std::size_t h = combine(0x5eed, v.index());
    return std::visit(
        [&](const auto &x) -> std::size_t {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, rt::Leaf>) {
                h = combine(h, hashAction(x.action));
                h = combine(h, static_cast<std::size_t>(x.phase.kind));
                h = combine(h, hashBound(x.phase.remaining));
                h = combine(h, hashBound(x.deadline));
                h = combine(h, x.spec.exec);
                return combine(h, hashBound(x.spec.timeout));
            } else if constexpr (std::is_same_v<T, rt::Seq>)
                return combine(combine(h, hashNodePtr(x.first)), hashTerm(x.rest));
            else if constexpr (std::is_same_v<T, rt::Choice> || std::is_same_v<T, rt::Par>)
                return combine(combine(h, hashNodePtr(x.left)), hashNodePtr(x.right));
            else if constexpr (std::is_same_v<T, rt::Exception>)
                return combine(combine(h, hashNodePtr(x.body)), hashTerm(x.handler));
            else if constexpr (std::is_same_v<T, rt::Scope>)
                return combine(combine(h, std::hash<std::string>{}(x.channel)), hashNodePtr(x.body));
            else if constexpr (std::is_same_v<T, rt::Prio>)
                return combine(combine(h, x.level.level), hashNodePtr(x.body));
            else if constexpr (std::is_same_v<T, rt::Timed>)
                return combine(combine(h, x.remaining), hashNodePtr(x.body));
            else if constexpr (std::is_same_v<T, rt::Periodic>) {
                h = combine(combine(h, hashTerm(x.templ)), x.period);
                h = combine(combine(h, hashBound(x.repsLeft)), x.elapsed);
                return combine(h, hashNodePtr(x.body));
            } else
                return h;
        },
        v);
}

} // namespace

namespace rt {

Node::Node(NodeVariant v) : v_(std::move(v)), hash_(hashRt(v_)) {}

bool sameNode(const NodePtr &a, const NodePtr &b) {
    if (a == b)
        return true;
    if (!a || !b || a->hash() != b->hash() || a->get().index() != b->get().index())
        return false;
    return std::visit(
        [&](const auto &x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const T &y = std::get<T>(b->get());
            if constexpr (std::is_same_v<T, Leaf>)
                return x.action == y.action && x.spec == y.spec && x.phase == y.phase &&
                       x.deadline == y.deadline;
            else if constexpr (std::is_same_v<T, Seq>)
                return sameNode(x.first, y.first) && sameTerm(x.rest, y.rest);
            else if constexpr (std::is_same_v<T, Choice> || std::is_same_v<T, Par>)
                return sameNode(x.left, y.left) && sameNode(x.right, y.right);
            else if constexpr (std::is_same_v<T, Exception>)
                return sameNode(x.body, y.body) && sameTerm(x.handler, y.handler);
            else if constexpr (std::is_same_v<T, Scope>)
                return x.channel == y.channel && sameNode(x.body, y.body);
            else if constexpr (std::is_same_v<T, Prio>)
                return x.level == y.level && sameNode(x.body, y.body);
            else if constexpr (std::is_same_v<T, Timed>)
                return x.remaining == y.remaining && sameNode(x.body, y.body);
            else if constexpr (std::is_same_v<T, Periodic>)
                return sameTerm(x.templ, y.templ) && x.period == y.period &&
                       x.repsLeft == y.repsLeft && x.elapsed == y.elapsed &&
                       sameNode(x.body, y.body);
            else
                return true;
        },
        a->get());
}

NodePtr stop() {
    static const NodePtr instance = std::make_shared<const Node>(Stop{});
    return instance;
}

} // namespace rt

namespace {

template <class T>
NodePtr node(T value) {
    return std::make_shared<const rt::Node>(rt::NodeVariant{std::move(value)});
}

Bound dec(Bound b) {
    if (b && *b > 0)
        return *b - 1;
    return b;
}

bool isCtrl(const Action &a) {
    return std::holds_alternative<act::New>(a) || std::holds_alternative<act::Kill>(a) ||
           std::holds_alternative<act::Exit>(a);
}

// Children of a runtime node in path-index order.
std::vector<NodePtr> childrenOf(const NodePtr &n) {
    return std::visit(
        [](const auto &x) -> std::vector<NodePtr> {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, rt::Seq>)
                return {x.first};
            else if constexpr (std::is_same_v<T, rt::Choice> || std::is_same_v<T, rt::Par>)
                return {x.left, x.right};
            else if constexpr (std::is_same_v<T, rt::Exception> || std::is_same_v<T, rt::Scope> ||
                               std::is_same_v<T, rt::Prio> || std::is_same_v<T, rt::Timed> ||
                               std::is_same_v<T, rt::Periodic>)
                return {x.body};
            else
                return {};
        },
        n->get());
}

NodePtr withChild(const NodePtr &n, std::size_t index, NodePtr child) {
    return std::visit(
        [&](const auto &x) -> NodePtr {
            using T = std::decay_t<decltype(x)>;
            T copy = x;
            if constexpr (std::is_same_v<T, rt::Seq>)
                copy.first = std::move(child);
            else if constexpr (std::is_same_v<T, rt::Choice> || std::is_same_v<T, rt::Par>)
                (index == 0 ? copy.left : copy.right) = std::move(child);
            else if constexpr (std::is_same_v<T, rt::Exception> || std::is_same_v<T, rt::Scope> ||
                               std::is_same_v<T, rt::Prio> || std::is_same_v<T, rt::Timed> ||
                               std::is_same_v<T, rt::Periodic>)
                copy.body = std::move(child);
            else
                throw std::logic_error("node has no children");
            return node(std::move(copy));
        },
        n->get());
}

NodePtr nodeAt(NodePtr n, const NodePath &path, std::size_t length) {
    for (std::size_t i = 0; i < length; ++i)
        n = childrenOf(n).at(path[i]);
    return n;
}

// Rewrites the node at path. With resolveChoices, every unresolved choice on
// the way collapses to the arm containing the path.
NodePtr rewriteAt(const NodePtr &n, const NodePath &path, std::size_t depth,
                  const std::function<NodePtr(const NodePtr &)> &fn, bool resolveChoices) {
    if (depth == path.size())
        return fn(n);
    std::size_t idx = path[depth];
    NodePtr child = childrenOf(n).at(idx);
    NodePtr updated = rewriteAt(child, path, depth + 1, fn, resolveChoices);
    if (resolveChoices && n->is<rt::Choice>())
        return updated;
    return withChild(n, idx, std::move(updated));
}

// Branch index at the innermost unresolved choice on the path.
std::optional<std::uint32_t> innermostChoiceBranch(const NodePtr &root, const NodePath &path) {
    std::optional<std::uint32_t> branch;
    NodePtr n = root;
    for (std::uint8_t idx : path) {
        if (n->is<rt::Choice>())
            branch = idx;
        n = childrenOf(n).at(idx);
    }
    return branch;
}

struct LeafRef {
    InstanceId instance;
    NodePath path;
    const rt::Leaf *leaf = nullptr;
    bool inChoice = false;
    Priority priority;
    std::vector<std::string> scopes;
};

void collectLeaves(const NodePtr &n, const ProcessInstance &inst, NodePath &path, bool inChoice,
                   Priority prio, std::vector<std::string> &scopes, std::vector<LeafRef> &out) {
    if (const auto *leaf = n->as<rt::Leaf>()) {
        out.push_back({inst.id, path, leaf, inChoice, prio, scopes});
        return;
    }
    bool choice = inChoice || n->is<rt::Choice>();
    if (const auto *p = n->as<rt::Prio>())
        prio = p->level;
    const auto *sc = n->as<rt::Scope>();
    if (sc)
        scopes.push_back(sc->channel);
    auto kids = childrenOf(n);
    for (std::size_t i = 0; i < kids.size(); ++i) {
        path.push_back(static_cast<std::uint8_t>(i));
        collectLeaves(kids[i], inst, path, choice, prio, scopes, out);
        path.pop_back();
    }
    if (sc)
        scopes.pop_back();
}

std::vector<LeafRef> leavesOf(const ProcessInstance &inst) {
    std::vector<LeafRef> out;
    NodePath path;
    std::vector<std::string> scopes;
    collectLeaves(inst.cursor, inst, path, false, inst.priority, scopes, out);
    return out;
}

std::string defOf(const Configuration &c, std::optional<InstanceId> id) {
    if (!id)
        return "root";
    return c.at(*id).def;
}

bool inSubtree(const Configuration &c, InstanceId node, InstanceId root) {
    std::optional<InstanceId> cur = node;
    while (cur) {
        if (*cur == root)
            return true;
        cur = c.at(*cur).parent;
    }
    return false;
}

// A synchronization or choice-resolution candidate before reduction.
struct SyncCandidate {
    Label label;
    std::vector<InstanceId> touches;
    bool move = false;
    bool scoped = false;
    bool zeroExec = false;
};

} // namespace

// ---------------------------------------------------------------------------

std::string_view causeName(Cause cause) {
    switch (cause) {
    case Cause::Timeout:
        return "timeout";
    case Cause::Deadline:
        return "deadline";
    case Cause::ProcDeadline:
        return "proc-deadline";
    case Cause::PeriodOverrun:
        return "period-overrun";
    case Cause::KillDenied:
        return "kill-denied";
    }
    return "?";
}

std::string_view statusName(Status status) {
    switch (status) {
    case Status::Running:
        return "Running";
    case Status::Terminated:
        return "Terminated";
    case Status::Deadlock:
        return "Deadlock";
    case Status::Fault:
        return "Fault";
    }
    return "?";
}

std::vector<InstanceId> Configuration::roots() const {
    std::vector<InstanceId> out;
    for (const auto &[id, inst] : instances)
        if (!inst.parent)
            out.push_back(id);
    return out;
}

std::vector<InstanceId> Configuration::children(InstanceId id) const {
    std::vector<InstanceId> out;
    for (const auto &[cid, inst] : instances)
        if (inst.parent == id)
            out.push_back(cid);
    return out;
}

std::size_t Configuration::hash() const {
    std::size_t h = combine(clock, nextId);
    for (const auto &f : faults)
        h = combine(combine(h, f.instance.value), static_cast<std::size_t>(f.cause) + 17 * f.clock);
    for (const auto &[id, inst] : instances) {
        h = combine(h, id.value);
        h = combine(h, std::hash<std::string>{}(inst.def));
        h = combine(h, inst.priority.level);
        h = combine(h, inst.parent ? inst.parent->value + 1 : 0);
        h = combine(h, inst.cursor->hash());
    }
    return h;
}

bool operator==(const Configuration &a, const Configuration &b) {
    if (a.clock != b.clock || a.nextId != b.nextId || a.faults != b.faults ||
        a.instances.size() != b.instances.size())
        return false;
    auto ia = a.instances.begin();
    auto ib = b.instances.begin();
    for (; ia != a.instances.end(); ++ia, ++ib) {
        const auto &x = ia->second;
        const auto &y = ib->second;
        if (ia->first != ib->first || x.def != y.def || x.priority != y.priority ||
            x.parent != y.parent || !rt::sameNode(x.cursor, y.cursor))
            return false;
    }
    return true;
}

std::string renderLabel(const Label &label) {
    std::ostringstream os;
    std::visit(
        [&](const auto &x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, TickLabel>)
                os << "tick";
            else if constexpr (std::is_same_v<T, CommLabel>)
                os << "comm " << x.channel << '(' << x.message << ") " << x.senderDef << "->"
                   << x.receiverDef;
            else if constexpr (std::is_same_v<T, MoveLabel>) {
                os << "move " << moveKindName(x.kind) << ' ' << x.moverDef << ' ' << x.fromDef
                   << "->" << x.toDef;
                if (x.key)
                    os << " #" << *x.key;
                if (x.unilateral)
                    os << " unilateral";
            } else if constexpr (std::is_same_v<T, CtrlLabel>) {
                static const char *names[] = {"new", "kill", "exit"};
                os << names[static_cast<int>(x.kind)] << ' ' << x.subjectDef << " by " << x.actorDef;
            } else if constexpr (std::is_same_v<T, HandlerLabel>)
                os << "handler " << x.def << ' ' << causeName(x.cause);
            else if constexpr (std::is_same_v<T, FaultLabel>)
                os << "fault " << x.def << ' ' << causeName(x.cause);
            else if constexpr (std::is_same_v<T, ChoiceLabel>)
                os << "choice " << x.def << " #" << x.branch;
            else
                os << (x.final ? "period-end " : "rearm ") << x.def;
        },
        label);
    return os.str();
}

bool isObservable(const Label &label) {
    return std::holds_alternative<CommLabel>(label) || std::holds_alternative<MoveLabel>(label) ||
           std::holds_alternative<CtrlLabel>(label) || std::holds_alternative<HandlerLabel>(label) ||
           std::holds_alternative<FaultLabel>(label);
}

// ---------------------------------------------------------------------------

class Engine::Impl {
public:
    Impl(const SpecFile &spec, EngineOptions options) : spec(canonicalize(spec)), options(options) {}

    SpecFile spec;
    EngineOptions options;

    const TermPtr &body(const std::string &def) const {
        const Definition *d = spec.find(def);
        if (!d)
            throw std::logic_error("undefined process '" + def + "'");
        return d->body;
    }

    // --- activation and normalization -------------------------------------

    struct Ctx {
        std::vector<TermPtr> spawns; // Nest terms met at runtime
    };

    NodePtr activate(const TermPtr &t, Ctx &ctx) const {
        return std::visit(
            [&](const auto &x) -> NodePtr {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, term::Act>) {
                    rt::Leaf leaf;
                    leaf.action = x.action;
                    if (const auto *e = std::get_if<act::Empty>(&x.action)) {
                        leaf.spec = TemporalSpec{};
                        leaf.spec.exec = e->exec;
                    } else {
                        leaf.spec = x.temporal.value_or(TemporalSpec::defaults());
                    }
                    leaf.phase = {PhaseKind::Ready, leaf.spec.ready};
                    leaf.deadline = leaf.spec.deadline;
                    NodePtr n = node(std::move(leaf));
                    if (x.period) {
                        TermPtr templ = mk::act(x.action, x.temporal, std::nullopt);
                        return node(rt::Periodic{templ, x.period->period, x.period->reps, 0, n});
                    }
                    return n;
                } else if constexpr (std::is_same_v<T, term::Seq>) {
                    return node(rt::Seq{activate(x.first, ctx), x.rest});
                } else if constexpr (std::is_same_v<T, term::Choice>) {
                    return node(rt::Choice{activate(x.left, ctx), activate(x.right, ctx)});
                } else if constexpr (std::is_same_v<T, term::Par>) {
                    return node(rt::Par{activate(x.left, ctx), activate(x.right, ctx)});
                } else if constexpr (std::is_same_v<T, term::Nest>) {
                    ctx.spawns.push_back(t);
                    return rt::stop();
                } else if constexpr (std::is_same_v<T, term::Exception>) {
                    return node(rt::Exception{activate(x.body, ctx), x.handler});
                } else if constexpr (std::is_same_v<T, term::ChannelScope>) {
                    return node(rt::Scope{x.channel, activate(x.body, ctx)});
                } else if constexpr (std::is_same_v<T, term::WithPriority>) {
                    return node(rt::Prio{x.level, activate(x.body, ctx)});
                } else if constexpr (std::is_same_v<T, term::TimedProc>) {
                    if (!x.spec.deadline)
                        return activate(x.body, ctx);
                    return node(rt::Timed{*x.spec.deadline, activate(x.body, ctx)});
                } else if constexpr (std::is_same_v<T, term::Repeat>) {
                    return node(rt::Periodic{x.body, x.period.period, x.period.reps, 0,
                                             activate(x.body, ctx)});
                } else if constexpr (std::is_same_v<T, term::Ref>) {
                    return activate(body(x.def), ctx);
                } else {
                    return rt::stop();
                }
            },
            t->node());
    }

    // Applies every zero-time structural simplification: finished actions
    // vanish, sequences advance, ready actions become waiting or executing,
    // empty choice arms drop out.
    NodePtr normalize(const NodePtr &n, bool inChoice, Ctx &ctx) const {
        return std::visit(
            [&](const auto &x) -> NodePtr {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, rt::Stop>) {
                    return n;
                } else if constexpr (std::is_same_v<T, rt::Leaf>) {
                    if (x.phase.kind == PhaseKind::Executing && x.phase.remaining == Ticks{0})
                        return rt::stop();
                    if (x.phase.kind != PhaseKind::Ready || x.phase.remaining != Ticks{0})
                        return n;
                    if (isSynchronous(x.action)) {
                        rt::Leaf copy = x;
                        copy.phase = {PhaseKind::Waiting, x.spec.timeout};
                        return node(std::move(copy));
                    }
                    if (std::holds_alternative<act::Empty>(x.action) && !inChoice) {
                        if (x.spec.exec == 0)
                            return rt::stop();
                        rt::Leaf copy = x;
                        copy.phase = {PhaseKind::Executing, x.spec.exec};
                        return node(std::move(copy));
                    }
                    return n; // pending control action or choice-guarded Empty
                } else if constexpr (std::is_same_v<T, rt::Seq>) {
                    NodePtr first = normalize(x.first, inChoice, ctx);
                    if (first->is<rt::Stop>())
                        return normalize(activate(x.rest, ctx), inChoice, ctx);
                    if (first == x.first)
                        return n;
                    return node(rt::Seq{first, x.rest});
                } else if constexpr (std::is_same_v<T, rt::Choice>) {
                    NodePtr l = normalize(x.left, true, ctx);
                    NodePtr r = normalize(x.right, true, ctx);
                    if (l->is<rt::Stop>())
                        return normalize(r, inChoice, ctx);
                    if (r->is<rt::Stop>())
                        return normalize(l, inChoice, ctx);
                    if (l == x.left && r == x.right)
                        return n;
                    return node(rt::Choice{l, r});
                } else if constexpr (std::is_same_v<T, rt::Par>) {
                    NodePtr l = normalize(x.left, inChoice, ctx);
                    NodePtr r = normalize(x.right, inChoice, ctx);
                    if (l->is<rt::Stop>())
                        return r;
                    if (r->is<rt::Stop>())
                        return l;
                    if (l == x.left && r == x.right)
                        return n;
                    return node(rt::Par{l, r});
                } else if constexpr (std::is_same_v<T, rt::Periodic>) {
                    NodePtr b = normalize(x.body, inChoice, ctx);
                    if (b == x.body)
                        return n;
                    T copy = x;
                    copy.body = b;
                    return node(std::move(copy));
                } else {
                    // Exception, Scope, Prio, Timed: vanish with their body.
                    NodePtr b = normalize(x.body, inChoice, ctx);
                    if (b->is<rt::Stop>())
                        return b;
                    if (b == x.body)
                        return n;
                    T copy = x;
                    copy.body = b;
                    return node(std::move(copy));
                }
            },
            n->get());
    }

    // --- instances ----------------------------------------------------------

    static Priority ownPriority(const TermPtr &behaviour, Priority fallback) {
        if (const auto *wp = behaviour->as<term::WithPriority>())
            return wp->level;
        return fallback;
    }

    InstanceId newInstance(Configuration &c, const std::string &def, std::optional<InstanceId> parent,
                           const TermPtr &behaviour, Priority priority) const {
        InstanceId id{c.nextId++};
        ProcessInstance inst;
        inst.id = id;
        inst.def = def;
        inst.priority = priority;
        inst.parent = parent;
        inst.cursor = rt::stop();
        c.instances.emplace(id, inst);
        Ctx ctx;
        NodePtr cursor = normalize(activate(behaviour, ctx), false, ctx);
        c.instances.at(id).cursor = cursor;
        spawnAll(c, id, ctx);
        return id;
    }

    void spawnAll(Configuration &c, InstanceId parent, Ctx &ctx) const {
        for (const auto &t : ctx.spawns)
            spawnTerm(c, t, parent, c.at(parent).def);
        ctx.spawns.clear();
    }

    // Static decomposition: parallel arms become sibling instances, nests
    // become containers, references become instances of their definition.
    void spawnTerm(Configuration &c, const TermPtr &t, std::optional<InstanceId> parent,
                   const std::string &owner) const {
        if (!t)
            return;
        Priority dflt{kDefaultPriority};
        if (const auto *p = t->as<term::Par>()) {
            spawnTerm(c, p->left, parent, owner);
            spawnTerm(c, p->right, parent, owner);
        } else if (const auto *n = t->as<term::Nest>()) {
            const TermPtr &b = body(n->def);
            InstanceId id = newInstance(c, n->def, parent, b, ownPriority(b, dflt));
            spawnTerm(c, n->children, id, n->def);
        } else if (const auto *r = t->as<term::Ref>()) {
            const TermPtr &b = body(r->def);
            newInstance(c, r->def, parent, b, ownPriority(b, dflt));
        } else {
            newInstance(c, owner, parent, t, ownPriority(t, dflt));
        }
    }

    void removeSubtree(Configuration &c, InstanceId root) const {
        std::vector<InstanceId> stack{root};
        std::vector<InstanceId> doomed;
        while (!stack.empty()) {
            InstanceId cur = stack.back();
            stack.pop_back();
            doomed.push_back(cur);
            for (InstanceId kid : c.children(cur))
                stack.push_back(kid);
        }
        for (InstanceId id : doomed)
            c.instances.erase(id);
    }

    void setCursor(Configuration &c, InstanceId id, NodePtr cursor, Ctx &ctx) const {
        c.instances.at(id).cursor = std::move(cursor);
        spawnAll(c, id, ctx);
    }

    // Puts the leaf at path into execution, resolving enclosing choices.
    void commit(Configuration &c, InstanceId id, const NodePath &path) const {
        Ctx ctx;
        NodePtr cursor = rewriteAt(
            c.at(id).cursor, path, 0,
            [](const NodePtr &n) {
                rt::Leaf leaf = *n->as<rt::Leaf>();
                leaf.phase = {PhaseKind::Executing, leaf.spec.exec};
                return node(std::move(leaf));
            },
            true);
        setCursor(c, id, normalize(cursor, false, ctx), ctx);
    }

    // Timeout/deadline/overrun at site: innermost enclosing exception handler,
    // else the instance faults.
    Label fireHandler(Configuration &c, InstanceId id, const NodePath &site, Cause cause) const {
        const ProcessInstance &inst = c.at(id);
        std::optional<std::size_t> handlerDepth;
        NodePtr n = inst.cursor;
        for (std::size_t depth = 0; depth < site.size(); ++depth) {
            if (n->is<rt::Exception>())
                handlerDepth = depth;
            n = childrenOf(n).at(site[depth]);
        }
        if (!handlerDepth) {
            FaultLabel label{id, inst.def, cause, site};
            c.faults.push_back({id, inst.def, cause, c.clock});
            c.instances.at(id).cursor = rt::stop();
            return label;
        }
        NodePath prefix(site.begin(), site.begin() + static_cast<std::ptrdiff_t>(*handlerDepth));
        Ctx ctx;
        NodePtr cursor = rewriteAt(
            inst.cursor, prefix, 0,
            [&](const NodePtr &exc) { return activate(exc->as<rt::Exception>()->handler, ctx); }, true);
        HandlerLabel label{id, inst.def, cause, site};
        setCursor(c, id, normalize(cursor, false, ctx), ctx);
        return label;
    }

    NodePtr tick(const NodePtr &n) const {
        return std::visit(
            [&](const auto &x) -> NodePtr {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, rt::Stop>) {
                    return n;
                } else if constexpr (std::is_same_v<T, rt::Leaf>) {
                    rt::Leaf copy = x;
                    copy.phase.remaining = dec(x.phase.remaining);
                    copy.deadline = dec(x.deadline);
                    return node(std::move(copy));
                } else if constexpr (std::is_same_v<T, rt::Seq>) {
                    return node(rt::Seq{tick(x.first), x.rest});
                } else if constexpr (std::is_same_v<T, rt::Choice>) {
                    return node(rt::Choice{tick(x.left), tick(x.right)});
                } else if constexpr (std::is_same_v<T, rt::Par>) {
                    return node(rt::Par{tick(x.left), tick(x.right)});
                } else if constexpr (std::is_same_v<T, rt::Timed>) {
                    return node(rt::Timed{x.remaining > 0 ? x.remaining - 1 : 0, tick(x.body)});
                } else if constexpr (std::is_same_v<T, rt::Periodic>) {
                    T copy = x;
                    copy.elapsed = x.elapsed + 1;
                    copy.body = tick(x.body);
                    return node(std::move(copy));
                } else {
                    T copy = x;
                    copy.body = tick(x.body);
                    return node(std::move(copy));
                }
            },
            n->get());
    }

    // Anything whose counter still runs: time may pass.
    static bool timeBlocked(const NodePtr &n) {
        if (const auto *leaf = n->as<rt::Leaf>()) {
            switch (leaf->phase.kind) {
            case PhaseKind::Ready:
            case PhaseKind::Executing:
                return true;
            case PhaseKind::Waiting:
                return leaf->phase.remaining.has_value() || leaf->deadline.has_value();
            }
        }
        if (n->is<rt::Timed>() || n->is<rt::Periodic>())
            return true;
        for (const auto &kid : childrenOf(n))
            if (timeBlocked(kid))
                return true;
        return false;
    }

    // --- urgent steps ---------------------------------------------------------

    struct Urgent {
        enum Kind { Deadline, ProcDeadline, Overrun, Rearm, Ctrl } kind;
        InstanceId instance;
        NodePath path;
    };

    static std::optional<Urgent> findUrgent(const ProcessInstance &inst, const NodePtr &n,
                                            NodePath &path) {
        if (const auto *leaf = n->as<rt::Leaf>()) {
            if (leaf->deadline == Ticks{0})
                return Urgent{Urgent::Deadline, inst.id, path};
            if (isCtrl(leaf->action) && leaf->phase.kind == PhaseKind::Ready &&
                leaf->phase.remaining == Ticks{0})
                return Urgent{Urgent::Ctrl, inst.id, path};
            return std::nullopt;
        }
        if (const auto *t = n->as<rt::Timed>(); t && t->remaining == 0)
            return Urgent{Urgent::ProcDeadline, inst.id, path};
        if (const auto *p = n->as<rt::Periodic>(); p && p->elapsed >= p->period)
            return Urgent{p->body->is<rt::Stop>() ? Urgent::Rearm : Urgent::Overrun, inst.id, path};
        auto kids = childrenOf(n);
        for (std::size_t i = 0; i < kids.size(); ++i) {
            path.push_back(static_cast<std::uint8_t>(i));
            auto found = findUrgent(inst, kids[i], path);
            path.pop_back();
            if (found)
                return found;
        }
        return std::nullopt;
    }

    Step applyUrgent(const Configuration &config, const Urgent &u) const {
        Configuration c = config;
        const ProcessInstance &inst = c.at(u.instance);
        switch (u.kind) {
        case Urgent::Deadline: {
            Label l = fireHandler(c, u.instance, u.path, Cause::Deadline);
            return {l, std::move(c)};
        }
        case Urgent::ProcDeadline: {
            Label l = fireHandler(c, u.instance, u.path, Cause::ProcDeadline);
            return {l, std::move(c)};
        }
        case Urgent::Overrun: {
            Label l = fireHandler(c, u.instance, u.path, Cause::PeriodOverrun);
            return {l, std::move(c)};
        }
        case Urgent::Rearm: {
            const auto *p = nodeAt(inst.cursor, u.path, u.path.size())->as<rt::Periodic>();
            bool final = p->repsLeft == Ticks{1};
            RearmLabel label{u.instance, inst.def, final, u.path};
            Ctx ctx;
            NodePtr cursor = rewriteAt(
                inst.cursor, u.path, 0,
                [&](const NodePtr &n) -> NodePtr {
                    const auto &per = *n->as<rt::Periodic>();
                    if (final)
                        return rt::stop();
                    rt::Periodic next = per;
                    if (next.repsLeft)
                        next.repsLeft = *next.repsLeft - 1;
                    next.elapsed = 0;
                    next.body = activate(per.templ, ctx);
                    return node(std::move(next));
                },
                false);
            setCursor(c, u.instance, normalize(cursor, false, ctx), ctx);
            return {label, std::move(c)};
        }
        case Urgent::Ctrl:
            return applyCtrl(std::move(c), u);
        }
        throw std::logic_error("unreachable");
    }

    static Priority effectivePriority(const ProcessInstance &inst, const NodePath &path) {
        Priority prio = inst.priority;
        NodePtr n = inst.cursor;
        for (std::uint8_t idx : path) {
            if (const auto *p = n->as<rt::Prio>())
                prio = p->level;
            n = childrenOf(n).at(idx);
        }
        return prio;
    }

    Step applyCtrl(Configuration c, const Urgent &u) const {
        const ProcessInstance inst = c.at(u.instance);
        const auto *leaf = nodeAt(inst.cursor, u.path, u.path.size())->as<rt::Leaf>();
        CtrlLabel label;
        label.actor = u.instance;
        label.actorDef = inst.def;
        label.leaf = u.path;
        Priority prio = effectivePriority(inst, u.path);

        if (const auto *n = std::get_if<act::New>(&leaf->action)) {
            label.kind = CtrlKind::New;
            label.subjectDef = n->def;
            const TermPtr &b = body(n->def);
            InstanceId child = newInstance(c, n->def, u.instance, b, ownPriority(b, prio));
            label.subjects.push_back(child);
            commit(c, u.instance, u.path);
        } else if (const auto *k = std::get_if<act::Kill>(&leaf->action)) {
            label.kind = CtrlKind::Kill;
            label.subjectDef = k->proc;
            for (const auto &[id, other] : c.instances)
                if (id != u.instance && other.def == k->proc)
                    label.subjects.push_back(id);
            for (InstanceId victim : label.subjects) {
                if (!prio.higherThan(c.at(victim).priority)) {
                    Label l = fireHandler(c, u.instance, u.path, Cause::KillDenied);
                    return {l, std::move(c)};
                }
            }
            for (InstanceId victim : label.subjects)
                if (c.instances.count(victim))
                    removeSubtree(c, victim);
            if (c.instances.count(u.instance))
                commit(c, u.instance, u.path);
        } else {
            label.kind = CtrlKind::Exit;
            label.subjectDef = inst.def;
            label.subjects.push_back(u.instance);
            removeSubtree(c, u.instance);
        }
        return {label, std::move(c)};
    }

    // --- synchronization ----------------------------------------------------

    static bool waiting(const LeafRef &l) { return l.leaf->phase.kind == PhaseKind::Waiting; }

    void commCandidates(const Configuration &c, const std::vector<LeafRef> &leaves,
                        std::vector<SyncCandidate> &out) const {
        for (const auto &s : leaves) {
            const auto *send = std::get_if<act::Send>(&s.leaf->action);
            if (!send || !waiting(s))
                continue;
            for (const auto &r : leaves) {
                const auto *recv = std::get_if<act::Receive>(&r.leaf->action);
                if (!recv || !waiting(r) || r.instance == s.instance)
                    continue;
                if (recv->channel != send->channel)
                    continue;
                if (recv->pattern != "_" && recv->pattern != send->message)
                    continue;
                bool sScoped = std::count(s.scopes.begin(), s.scopes.end(), send->channel) > 0;
                bool rScoped = std::count(r.scopes.begin(), r.scopes.end(), recv->channel) > 0;
                if (sScoped && !inSubtree(c, r.instance, s.instance))
                    continue;
                if (rScoped && !inSubtree(c, s.instance, r.instance))
                    continue;
                CommLabel label{send->channel,        send->message,       s.instance, r.instance,
                                c.at(s.instance).def, c.at(r.instance).def, s.path,     r.path};
                SyncCandidate cand;
                cand.label = label;
                cand.touches = {s.instance, r.instance};
                cand.scoped = sScoped || rScoped;
                cand.zeroExec = s.leaf->spec.exec == 0 || r.leaf->spec.exec == 0;
                out.push_back(std::move(cand));
            }
        }
    }

    std::vector<MoveLabel> moveLabels(const Configuration &c, const std::vector<LeafRef> &leaves) const {
        std::vector<MoveLabel> out;
        auto permits = [&](InstanceId holder, MoveKind kind, const std::string &subject,
                           const std::optional<std::string> &key) {
            std::vector<const LeafRef *> found;
            for (const auto &l : leaves) {
                if (l.instance != holder || !waiting(l))
                    continue;
                const auto *p = std::get_if<act::MovePermit>(&l.leaf->action);
                if (p && p->kind == kind && p->subject == subject && p->key == key)
                    found.push_back(&l);
            }
            return found;
        };

        for (const auto &req : leaves) {
            const auto *m = std::get_if<act::MoveRequest>(&req.leaf->action);
            if (!m || !waiting(req))
                continue;
            const ProcessInstance &R = c.at(req.instance);
            auto make = [&](InstanceId mover, std::optional<InstanceId> to, bool unilateral,
                            const LeafRef *permit) {
                MoveLabel label;
                label.kind = m->kind;
                label.mover = mover;
                label.moverDef = c.at(mover).def;
                label.from = c.at(mover).parent;
                label.to = to;
                label.fromDef = defOf(c, label.from);
                label.toDef = defOf(c, to);
                label.key = m->key;
                label.unilateral = unilateral;
                label.requester = req.instance;
                label.requesterLeaf = req.path;
                if (permit) {
                    label.permitter = permit->instance;
                    label.permitterLeaf = permit->path;
                }
                out.push_back(std::move(label));
            };

            switch (m->kind) {
            case MoveKind::In:
                for (const auto &[id, target] : c.instances) {
                    if (id == R.id || target.def != m->target || target.parent != R.parent)
                        continue;
                    for (const auto *p : permits(id, MoveKind::In, R.def, m->key))
                        make(R.id, id, false, p);
                }
                break;
            case MoveKind::Out: {
                if (!R.parent)
                    break;
                const ProcessInstance &parent = c.at(*R.parent);
                if (parent.def != m->target)
                    break;
                Priority prio = m->prio.value_or(effectivePriority(R, req.path));
                if (prio.higherThan(parent.priority)) {
                    make(R.id, parent.parent, true, nullptr);
                    break;
                }
                for (const auto *p : permits(parent.id, MoveKind::Out, R.def, m->key))
                    make(R.id, parent.parent, false, p);
                break;
            }
            case MoveKind::Get:
                for (const auto &[id, q] : c.instances) {
                    if (id == R.id || q.def != m->target || q.parent != R.parent)
                        continue;
                    for (const auto *p : permits(id, MoveKind::Get, R.def, m->key))
                        make(id, R.id, false, p);
                }
                break;
            case MoveKind::Put:
                for (const auto &[id, q] : c.instances) {
                    if (q.def != m->target || q.parent != R.id)
                        continue;
                    for (const auto *p : permits(id, MoveKind::Put, R.def, m->key))
                        make(id, R.parent, false, p);
                }
                break;
            }
        }
        return out;
    }

    std::vector<LeafRef> allLeaves(const Configuration &c) const {
        std::vector<LeafRef> out;
        for (const auto &[id, inst] : c.instances) {
            auto ls = leavesOf(inst);
            out.insert(out.end(), std::make_move_iterator(ls.begin()), std::make_move_iterator(ls.end()));
        }
        return out;
    }

    std::vector<SyncCandidate> syncCandidates(const Configuration &c) const {
        auto leaves = allLeaves(c);
        std::vector<SyncCandidate> out;
        commCandidates(c, leaves, out);
        for (auto &label : moveLabels(c, leaves)) {
            SyncCandidate cand;
            cand.move = true;
            cand.touches = {label.mover, label.requester};
            if (label.permitter)
                cand.touches.push_back(*label.permitter);
            if (label.from)
                cand.touches.push_back(*label.from);
            if (label.to)
                cand.touches.push_back(*label.to);
            auto exec = [&](InstanceId id, const NodePath &p) {
                return nodeAt(c.at(id).cursor, p, p.size())->as<rt::Leaf>()->spec.exec;
            };
            cand.zeroExec = exec(label.requester, label.requesterLeaf) == 0 ||
                            (label.permitter && exec(*label.permitter, label.permitterLeaf) == 0);
            cand.label = std::move(label);
            out.push_back(std::move(cand));
        }
        for (const auto &l : leaves) {
            if (!std::holds_alternative<act::Empty>(l.leaf->action) || !l.inChoice ||
                l.leaf->phase.kind != PhaseKind::Ready || l.leaf->phase.remaining != Ticks{0})
                continue;
            const ProcessInstance &inst = c.at(l.instance);
            SyncCandidate cand;
            cand.label = ChoiceLabel{l.instance, inst.def,
                                     innermostChoiceBranch(inst.cursor, l.path).value_or(0), l.path};
            cand.touches = {l.instance};
            cand.zeroExec = l.leaf->spec.exec == 0;
            out.push_back(std::move(cand));
        }
        return out;
    }

    // Keeps the dependency-closed group of candidates around the first one.
    // Candidates outside it touch disjoint instances, stay enabled, and
    // commute with everything in it, so exploring them later loses no state
    // that matters.
    static std::vector<std::size_t> persistentGroup(const std::vector<SyncCandidate> &cands) {
        std::vector<std::size_t> all(cands.size());
        for (std::size_t i = 0; i < cands.size(); ++i)
            all[i] = i;
        for (const auto &c : cands)
            if (c.zeroExec)
                return all;

        std::vector<bool> in(cands.size(), false);
        std::set<InstanceId> touched;
        bool hasMove = false, hasScoped = false;
        in[0] = true;
        touched.insert(cands[0].touches.begin(), cands[0].touches.end());
        hasMove = cands[0].move;
        hasScoped = cands[0].scoped;
        for (bool grew = true; grew;) {
            grew = false;
            for (std::size_t i = 0; i < cands.size(); ++i) {
                if (in[i])
                    continue;
                bool dependent = (cands[i].move && hasScoped) || (cands[i].scoped && hasMove);
                for (InstanceId id : cands[i].touches)
                    dependent = dependent || touched.count(id) > 0;
                if (!dependent)
                    continue;
                in[i] = true;
                grew = true;
                touched.insert(cands[i].touches.begin(), cands[i].touches.end());
                hasMove = hasMove || cands[i].move;
                hasScoped = hasScoped || cands[i].scoped;
            }
        }
        std::vector<std::size_t> group;
        for (std::size_t i = 0; i < cands.size(); ++i)
            if (in[i])
                group.push_back(i);
        return group;
    }

    Step applySync(const Configuration &config, const Label &label) const {
        Configuration c = config;
        if (const auto *comm = std::get_if<CommLabel>(&label)) {
            commit(c, comm->sender, comm->senderLeaf);
            commit(c, comm->receiver, comm->receiverLeaf);
        } else if (const auto *mv = std::get_if<MoveLabel>(&label)) {
            c.instances.at(mv->mover).parent = mv->to;
            commit(c, mv->requester, mv->requesterLeaf);
            if (mv->permitter)
                commit(c, *mv->permitter, mv->permitterLeaf);
        } else if (const auto *ch = std::get_if<ChoiceLabel>(&label)) {
            commit(c, ch->instance, ch->leaf);
        } else {
            throw std::logic_error("not a synchronization label");
        }
        return {label, std::move(c)};
    }

    Step applyTick(const Configuration &config) const {
        Configuration c = config;
        ++c.clock;
        std::vector<InstanceId> ids;
        for (const auto &[id, inst] : c.instances)
            ids.push_back(id);
        for (InstanceId id : ids) {
            Ctx ctx;
            NodePtr cursor = normalize(tick(c.at(id).cursor), false, ctx);
            setCursor(c, id, cursor, ctx);
        }
        return {TickLabel{}, std::move(c)};
    }

    std::vector<Step> enabled(const Configuration &c) const {
        // (a) urgent zero-time steps, one at a time in instance order
        for (const auto &[id, inst] : c.instances) {
            NodePath path;
            if (auto u = findUrgent(inst, inst.cursor, path))
                return {applyUrgent(c, *u)};
        }

        // (b) synchronizations and choice resolutions
        auto cands = syncCandidates(c);
        if (!cands.empty()) {
            std::vector<Step> steps;
            if (!options.reduce) {
                for (const auto &cand : cands)
                    steps.push_back(applySync(c, cand.label));
                return steps;
            }
            for (std::size_t i : persistentGroup(cands))
                steps.push_back(applySync(c, cands[i].label));
            return steps;
        }

        // timeouts: a waiting action whose timeout ran out with no partner
        for (const auto &[id, inst] : c.instances) {
            for (const auto &l : leavesOf(inst)) {
                if (l.leaf->phase.kind == PhaseKind::Waiting && l.leaf->phase.remaining == Ticks{0}) {
                    Configuration next = c;
                    Label label = fireHandler(next, id, l.path, Cause::Timeout);
                    return {Step{label, std::move(next)}};
                }
            }
        }

        // (c) time passes only when something is counting down
        for (const auto &[id, inst] : c.instances)
            if (timeBlocked(inst.cursor))
                return {applyTick(c)};
        return {};
    }
};

// ---------------------------------------------------------------------------

Engine::Engine(const SpecFile &spec, EngineOptions options)
    : impl_(std::make_shared<const Impl>(spec, options)) {}

const SpecFile &Engine::spec() const { return impl_->spec; }

Configuration Engine::init() const {
    Configuration c;
    const Definition *root = impl_->spec.find(impl_->spec.root);
    if (!root)
        throw std::invalid_argument("specification has no root definition");
    impl_->spawnTerm(c, root->body, std::nullopt, root->name);
    return c;
}

std::vector<Step> Engine::enabledSteps(const Configuration &config) const {
    return impl_->enabled(config);
}

Configuration Engine::applyStep(const Configuration &config, const Step &step) const {
    for (auto &s : enabledSteps(config))
        if (s.label == step.label)
            return s.result;
    throw std::logic_error("step not enabled: " + renderLabel(step.label));
}

std::optional<Configuration> Engine::applyLabel(const Configuration &config, const Label &label) const {
    for (auto &s : enabledSteps(config))
        if (s.label == label)
            return std::move(s.result);
    return std::nullopt;
}

std::vector<MoveCandidate> Engine::matchMove(const Configuration &config) const {
    std::vector<MoveCandidate> out;
    for (auto &l : impl_->moveLabels(config, impl_->allLeaves(config)))
        out.push_back({std::move(l)});
    return out;
}

Status Engine::classify(const Configuration &config) const {
    if (!config.faults.empty())
        return Status::Fault;
    bool allDone = std::all_of(config.instances.begin(), config.instances.end(),
                               [](const auto &kv) { return kv.second.terminated(); });
    if (allDone)
        return Status::Terminated;
    if (enabledSteps(config).empty())
        return Status::Deadlock;
    return Status::Running;
}

std::vector<BlockedInstance> Engine::blocked(const Configuration &config) const {
    std::vector<BlockedInstance> out;
    for (const auto &[id, inst] : config.instances) {
        if (inst.terminated())
            continue;
        BlockedInstance b{id, inst.def, {}};
        for (const auto &l : leavesOf(inst))
            b.heads.push_back(describe(l.leaf->action));
        out.push_back(std::move(b));
    }
    return out;
}

} // namespace dtcal
