#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include <random>

using namespace dtcal;

namespace {

const ProcessInstance *byDef(const Configuration &c, const std::string &def) {
    for (const auto &[id, inst] : c.instances)
        if (inst.def == def)
            return &inst;
    return nullptr;
}

const rt::Leaf *firstLeaf(const NodePtr &n) {
    if (const auto *l = n->as<rt::Leaf>())
        return l;
    return std::visit(
        [](const auto &x) -> const rt::Leaf * {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, rt::Seq>)
                return firstLeaf(x.first);
            else if constexpr (std::is_same_v<T, rt::Choice> || std::is_same_v<T, rt::Par>) {
                auto l = firstLeaf(x.left);
                return l ? l : firstLeaf(x.right);
            } else if constexpr (std::is_same_v<T, rt::Exception> || std::is_same_v<T, rt::Scope> ||
                                 std::is_same_v<T, rt::Prio> || std::is_same_v<T, rt::Timed> ||
                                 std::is_same_v<T, rt::Periodic>)
                return firstLeaf(x.body);
            else
                return nullptr;
        },
        n->get());
}

const rt::Leaf *head(const Configuration &c, const std::string &def) {
    const auto *inst = byDef(c, def);
    REQUIRE(inst);
    return firstLeaf(inst->cursor);
}

template <class L>
std::size_t countSteps(const std::vector<Step> &steps) {
    std::size_t n = 0;
    for (const auto &s : steps)
        n += std::holds_alternative<L>(s.label);
    return n;
}

/// The single enabled step, which must carry a label of kind L.
template <class L>
Step only(const Engine &e, const Configuration &c) {
    auto steps = e.enabledSteps(c);
    REQUIRE(steps.size() == 1);
    REQUIRE(std::holds_alternative<L>(steps[0].label));
    return steps[0];
}

Configuration tick(const Engine &e, const Configuration &c) { return only<TickLabel>(e, c).result; }

ActionPhase phase(PhaseKind k, Bound r) { return {k, r}; }

} // namespace

TEST_CASE("init builds the containment forest") {
    SUBCASE("stop") {
        Engine e(testing::spec("S := stop;"));
        auto c = e.init();
        REQUIRE(c.instances.size() == 1);
        CHECK(c.instances.begin()->second.terminated());
        CHECK(e.classify(c) == Status::Terminated);
    }
    SUBCASE("parallel references are root-level siblings") {
        Engine e(testing::spec("S := A | B; A := stop; B := stop;"));
        auto c = e.init();
        CHECK(c.instances.size() == 2);
        CHECK(c.roots().size() == 2);
    }
    SUBCASE("SEES") {
        Engine e(testing::corpusSpec("sees.dtc"));
        auto c = e.init();
        // Sys itself only structures its children, so it has no instance.
        CHECK(c.instances.size() == 11);
        auto parentDef = [&](const std::string &def) -> std::string {
            const auto *inst = byDef(c, def);
            REQUIRE(inst);
            return inst->parent ? c.at(*inst->parent).def : "root";
        };
        CHECK(parentDef("Building") == "root");
        CHECK(parentDef("E911") == "root");
        for (const char *d : {"ControlSystem", "StairA", "StairB", "Floor1", "Floor2"})
            CHECK(parentDef(d) == "Building");
        CHECK(parentDef("SensorA") == "StairA");
        CHECK(parentDef("SensorB") == "StairB");
        CHECK(parentDef("P1") == "Floor2");
        CHECK(parentDef("P2") == "Floor2");
    }
}

// ---------------------------------------------------------------------------
// The ten timing rules

TEST_CASE("rule Tick-Time R: ready and deadline count down") {
    Engine e(testing::spec("S := a!(x)[2,3,1,5] | a?(x)[9,-,1,-];"));
    auto c = e.init();
    const auto *l = head(c, "S");
    CHECK(l->phase == phase(PhaseKind::Ready, 2));
    CHECK(l->deadline == Bound{5});
    auto c1 = tick(e, c);
    l = head(c1, "S");
    // [2,3,1,5] -> [1,3,1,4]
    CHECK(l->phase == phase(PhaseKind::Ready, 1));
    CHECK(l->spec.timeout == Bound{3});
    CHECK(l->spec.exec == 1);
    CHECK(l->deadline == Bound{4});
    CHECK(c1.clock == 1);
}

TEST_CASE("rule Tick-Time TO: a waiting action's timeout counts down") {
    Engine e(testing::spec("S := a!(x)[0,3,1,-];"));
    auto c = e.init();
    CHECK(head(c, "S")->phase == phase(PhaseKind::Waiting, 3));
    auto c1 = tick(e, c);
    CHECK(head(c1, "S")->phase == phase(PhaseKind::Waiting, 2));
}

TEST_CASE("rule Tick-Time End: a finished action hands over to its successor") {
    Engine e(testing::spec("S := nil(1) . a!(x)[0,4,1,-];"));
    auto c = e.init();
    CHECK(head(c, "S")->phase == phase(PhaseKind::Executing, 1));
    auto c1 = tick(e, c);
    const auto *l = head(c1, "S");
    CHECK(std::holds_alternative<act::Send>(l->action));
    CHECK(l->phase == phase(PhaseKind::Waiting, 4));
}

TEST_CASE("rule Tick-Time SyncE: synchronized partners execute in lockstep") {
    Engine e(testing::spec("S := a!(x)[0,-,2,5] | a?(x)[0,-,3,-];"));
    auto c = e.init();
    auto comm = only<CommLabel>(e, c);
    auto c1 = comm.result;
    CHECK(c1.clock == 0);
    const auto &insts = c1.instances;
    const auto *send = firstLeaf(insts.begin()->second.cursor);
    const auto *recv = firstLeaf(std::next(insts.begin())->second.cursor);
    CHECK(send->phase == phase(PhaseKind::Executing, 2));
    CHECK(recv->phase == phase(PhaseKind::Executing, 3));
    auto c2 = tick(e, c1);
    send = firstLeaf(c2.instances.begin()->second.cursor);
    recv = firstLeaf(std::next(c2.instances.begin())->second.cursor);
    CHECK(send->phase == phase(PhaseKind::Executing, 1));
    CHECK(send->deadline == Bound{4});
    CHECK(recv->phase == phase(PhaseKind::Executing, 2));
}

TEST_CASE("rule Tick-Time AsyncE: asynchronous actions execute without waiting") {
    Engine e(testing::spec("S := nil(3);"));
    auto c = e.init();
    CHECK(head(c, "S")->phase == phase(PhaseKind::Executing, 3));
    auto c1 = tick(e, c);
    CHECK(head(c1, "S")->phase == phase(PhaseKind::Executing, 2));
}

TEST_CASE("rule Tick-Time P: a process deadline counts down every tick") {
    Engine e(testing::spec("S := dl(5) a?(x)[0,-,1,-] | nil(9);"));
    auto c = e.init();
    const auto *timed = byDef(c, "S")->cursor->as<rt::Timed>();
    REQUIRE(timed);
    CHECK(timed->remaining == 5);
    auto c1 = tick(e, c);
    CHECK(byDef(c1, "S")->cursor->as<rt::Timed>()->remaining == 4);
}

TEST_CASE("rule Timeout: Waiting(0) with a handler installs the handler") {
    Engine e(testing::spec("S := a!(x)[0,0,1,-] \\ b!(y);"));
    auto c = e.init();
    CHECK(head(c, "S")->phase == phase(PhaseKind::Waiting, 0));
    auto h = only<HandlerLabel>(e, c);
    CHECK(std::get<HandlerLabel>(h.label).cause == Cause::Timeout);
    const auto *l = head(h.result, "S");
    CHECK(std::get<act::Send>(l->action).channel == "b");
    CHECK(h.result.faults.empty());
}

TEST_CASE("rule Deadline: an expired deadline fires the handler") {
    Engine e(testing::spec("S := a?(x)[0,-,1,2] \\ nil(4);"));
    auto c = tick(e, tick(e, e.init()));
    auto h = only<HandlerLabel>(e, c);
    CHECK(std::get<HandlerLabel>(h.label).cause == Cause::Deadline);
    CHECK(head(h.result, "S")->phase == phase(PhaseKind::Executing, 4));
}

TEST_CASE("rules Period and Period End") {
    Engine e(testing::spec("S := nil(1)^(3,2) . b!(y)[0,-,1,-];"));
    auto c = e.init();
    for (int i = 0; i < 3; ++i)
        c = tick(e, c);
    auto rearm = only<RearmLabel>(e, c);
    CHECK_FALSE(std::get<RearmLabel>(rearm.label).final);
    CHECK(head(rearm.result, "S")->phase == phase(PhaseKind::Executing, 1));
    c = rearm.result;
    for (int i = 0; i < 3; ++i)
        c = tick(e, c);
    CHECK(c.clock == 6);
    auto end = only<RearmLabel>(e, c);
    CHECK(std::get<RearmLabel>(end.label).final);
    CHECK(std::holds_alternative<act::Send>(head(end.result, "S")->action));
}

TEST_CASE("periodic firing times") {
    Engine e(testing::spec("S := nil(1)^(6,inf);"));
    auto c = e.init();
    std::vector<Ticks> rearms;
    while (c.clock < 20) {
        auto steps = e.enabledSteps(c);
        REQUIRE(steps.size() == 1);
        if (std::holds_alternative<RearmLabel>(steps[0].label))
            rearms.push_back(c.clock);
        c = steps[0].result;
    }
    CHECK(rearms == std::vector<Ticks>{6, 12, 18});
}

TEST_CASE("a periodic body that outlasts its period overruns") {
    Engine e(testing::spec("S := a?(x)^(2,inf);"));
    auto c = tick(e, tick(e, e.init()));
    auto f = only<FaultLabel>(e, c);
    CHECK(std::get<FaultLabel>(f.label).cause == Cause::PeriodOverrun);
}

// ---------------------------------------------------------------------------

TEST_CASE("unhandled timeout is a fault") {
    Engine e(testing::spec("S := a!(x)[0,2,1,-];"));
    auto c = tick(e, tick(e, e.init()));
    auto f = only<FaultLabel>(e, c);
    CHECK(std::get<FaultLabel>(f.label).cause == Cause::Timeout);
    CHECK(e.classify(f.result) == Status::Fault);
    REQUIRE(f.result.faults.size() == 1);
    CHECK(f.result.faults[0].clock == 2);
}

TEST_CASE("classification") {
    Engine lone(testing::spec("S := a?(x);"));
    CHECK(lone.classify(lone.init()) == Status::Deadlock);
    auto blocked = lone.blocked(lone.init());
    REQUIRE(blocked.size() == 1);
    CHECK(blocked[0].heads == std::vector<std::string>{"a?(x)"});
    Engine run(testing::spec("S := nil(2);"));
    CHECK(run.classify(run.init()) == Status::Running);
}

TEST_CASE("communication pairing") {
    SUBCASE("one sender, one receiver") {
        Engine e(testing::spec("S := a!(x) | a?(x);"));
        CHECK(countSteps<CommLabel>(e.enabledSteps(e.init())) == 1);
    }
    SUBCASE("two senders, one receiver branch") {
        Engine e(testing::spec("S := a!(x) | a!(x) | a?(_);"));
        auto steps = e.enabledSteps(e.init());
        CHECK(steps.size() == 2);
        CHECK(countSteps<CommLabel>(steps) == 2);
    }
    SUBCASE("message must match the pattern") {
        Engine e(testing::spec("S := a!(x) | a?(y);"));
        CHECK(e.classify(e.init()) == Status::Deadlock);
    }
    SUBCASE("no self communication within one instance") {
        Engine e(testing::spec("S := P; P := a!(x) | a?(x);"));
        CHECK(e.classify(e.init()) == Status::Deadlock);
    }
    SUBCASE("a scoped channel pairs only inside its subtree") {
        Engine inside(testing::spec("S := Box[In] | Out; Box := scope c in c?(m); In := c!(m); Out := c!(m);"));
        auto steps = inside.enabledSteps(inside.init());
        REQUIRE(steps.size() == 1);
        CHECK(std::get<CommLabel>(steps[0].label).senderDef == "In");
    }
}

TEST_CASE("SEES opens with the fire-location choice") {
    Engine e(testing::corpusSpec("sees.dtc"));
    auto steps = e.enabledSteps(e.init());
    REQUIRE(steps.size() == 2);
    std::set<std::string> channels;
    for (const auto &s : steps)
        channels.insert(std::get<CommLabel>(s.label).channel);
    CHECK(channels == std::set<std::string>{"SA", "SB"});
}

TEST_CASE("choice races resolve on the first action") {
    Engine e(testing::spec("S := (a!(x) + b!(x)) | a?(_) | b?(_);"));
    auto steps = e.enabledSteps(e.init());
    CHECK(steps.size() == 2);
    for (const auto &s : steps) {
        const auto &comm = std::get<CommLabel>(s.label);
        // The losing arm is gone from the sender.
        CHECK(firstLeaf(s.result.at(comm.sender).cursor)->phase.kind == PhaseKind::Executing);
    }
    Engine silent(testing::spec("S := nil . a!(x) + b?(x);"));
    auto c = silent.init();
    auto pick = only<ChoiceLabel>(silent, c);
    CHECK(std::get<ChoiceLabel>(pick.label).branch == 0);
}

TEST_CASE("movement") {
    SUBCASE("out with the parent's permission") {
        Engine e(testing::spec("S := Building[Floor2[P1]]; Building := nil; Floor2 := acc out P1; P1 := out Floor2;"));
        auto c = e.init();
        auto moves = e.matchMove(c);
        REQUIRE(moves.size() == 1);
        CHECK_FALSE(moves[0].label.unilateral);
        auto m = only<MoveLabel>(e, c);
        const auto *p1 = byDef(m.result, "P1");
        CHECK(m.result.at(*p1->parent).def == "Building");
    }
    SUBCASE("in with the target's permission") {
        Engine e(testing::spec("S := Building[] | E911; Building := acc in E911; E911 := in Building;"));
        auto m = only<MoveLabel>(e, e.init());
        const auto *p = byDef(m.result, "E911");
        REQUIRE(p->parent);
        CHECK(m.result.at(*p->parent).def == "Building");
    }
    SUBCASE("a higher-priority child leaves unilaterally") {
        Engine e(testing::spec("S := Room[Kid]; Room := @5 a?(x); Kid := @0 out Room;"));
        auto moves = e.matchMove(e.init());
        REQUIRE(moves.size() == 1);
        CHECK(moves[0].label.unilateral);
        auto m = only<MoveLabel>(e, e.init());
        CHECK_FALSE(byDef(m.result, "Kid")->parent.has_value());
    }
    SUBCASE("keys must agree") {
        Engine e(testing::spec("S := Room[] | P; Room := acc in #k P; P := in #j Room;"));
        CHECK(e.matchMove(e.init()).empty());
        Engine ok(testing::spec("S := Room[] | P; Room := acc in #k P; P := in #k Room;"));
        CHECK(ok.matchMove(ok.init()).size() == 1);
    }
    SUBCASE("get pulls a sibling inside, put pushes a child out") {
        Engine get(testing::spec("S := Box | Q; Box := get Q; Q := acc get Box;"));
        auto g = only<MoveLabel>(get, get.init());
        const auto *q = byDef(g.result, "Q");
        REQUIRE(q->parent);
        CHECK(g.result.at(*q->parent).def == "Box");
        Engine put(testing::spec("S := Box[Q]; Box := put Q; Q := acc put Box;"));
        auto p = only<MoveLabel>(put, put.init());
        CHECK_FALSE(byDef(p.result, "Q")->parent.has_value());
    }
}

TEST_CASE("control actions") {
    SUBCASE("new creates a child with the creator's priority") {
        Engine e(testing::spec("S := @3 (new T . nil); T := a?(x);"));
        auto n = only<CtrlLabel>(e, e.init());
        const auto *t = byDef(n.result, "T");
        REQUIRE(t);
        CHECK(t->priority == Priority{3});
        CHECK(n.result.at(*t->parent).def == "S");
    }
    SUBCASE("kill needs a higher priority") {
        Engine ok(testing::spec("S := A | B; A := @5 kill B; B := @2 a?(x);"));
        auto k = only<CtrlLabel>(ok, ok.init());
        CHECK(byDef(k.result, "B") == nullptr);
        Engine denied(testing::spec("S := A | B; A := @1 (kill B \\ nil); B := @2 a?(x);"));
        auto h = only<HandlerLabel>(denied, denied.init());
        CHECK(std::get<HandlerLabel>(h.label).cause == Cause::KillDenied);
        CHECK(byDef(h.result, "B") != nullptr);
    }
    SUBCASE("exit removes the whole subtree") {
        Engine e(testing::spec("S := Box[Inner]; Box := nil(2) . exit; Inner := a?(x);"));
        auto c = tick(e, tick(e, e.init()));
        auto x = only<CtrlLabel>(e, c);
        CHECK(x.result.instances.empty());
    }
}

TEST_CASE("properties over random walks of generated specs") {
    testing::SpecGenerator gen(99);
    for (int spec = 0; spec < 60; ++spec) {
        std::string text = gen.next();
        Engine e(testing::spec(text));
        std::mt19937_64 rng(static_cast<std::uint64_t>(spec));
        auto c = e.init();
        for (int step = 0; step < 200 && c.clock < 25; ++step) {
            auto steps = e.enabledSteps(c);
            if (steps.empty())
                break;
            bool hasTick = countSteps<TickLabel>(steps) > 0;
            // Maximal progress: a tick is only ever offered alone.
            CHECK_MESSAGE((!hasTick || steps.size() == 1), text);
            const auto &s = steps[rng() % steps.size()];
            // Determinism per label.
            auto again = e.applyLabel(c, s.label);
            REQUIRE(again);
            CHECK(*again == s.result);
            // Clock moves only on ticks, by one.
            CHECK(s.result.clock == c.clock + (isTick(s.label) ? 1 : 0));
            // The containment relation stays a forest.
            for (const auto &[id, inst] : s.result.instances) {
                std::set<InstanceId> seen{id};
                auto p = inst.parent;
                while (p) {
                    REQUIRE(s.result.instances.count(*p));
                    REQUIRE_MESSAGE(seen.insert(*p).second, text);
                    p = s.result.at(*p).parent;
                }
            }
            c = s.result;
        }
    }
}
