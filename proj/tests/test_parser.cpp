#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include <algorithm>

using namespace dtcal;

namespace {

TermPtr body(const std::string &text) {
    auto r = parse(text, "<t>");
    REQUIRE(r.ok());
    return r.spec->definitions.front().body;
}

std::size_t count(const std::string &hay, const std::string &needle) {
    std::size_t n = 0;
    for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1))
        ++n;
    return n;
}

} // namespace

TEST_CASE("temporal suffix attaches to the action") {
    auto t = body("S := a!(x)[0,3,1,-];");
    CHECK(sameTerm(t, mk::act(act::Send{"a", "x"}, TemporalSpec{0, 3, 1, std::nullopt})));
}

TEST_CASE("exception binds to the preceding unary") {
    auto t = body("S := (a!(x) . b!(y)) \\ nil;");
    auto expected = mk::exception(mk::seq(mk::act(act::Send{"a", "x"}), mk::act(act::Send{"b", "y"})),
                                  mk::act(act::Empty{1}));
    CHECK(sameTerm(t, expected));
}

TEST_CASE("precedence: + loosest, then |, then .") {
    auto t = body("S := a!(x) . b!(x) | c!(x) + d!(x);");
    const auto *ch = t->as<term::Choice>();
    REQUIRE(ch);
    const auto *par = ch->left->as<term::Par>();
    REQUIRE(par);
    CHECK(par->left->is<term::Seq>());
}

TEST_CASE("period and group suffixes") {
    auto t = body("S := ((a!(x)[0,3,1,-] . b!(y)) \\ nil(3))^(6,inf);");
    const auto *rep = t->as<term::Repeat>();
    REQUIRE(rep);
    CHECK(rep->period == PeriodSpec{6, std::nullopt});
    CHECK(rep->body->is<term::Exception>());
    auto act = body("S := nil(1)^(2,3);");
    REQUIRE(act->as<term::Act>());
    CHECK(act->as<term::Act>()->period == PeriodSpec{2, 3});
}

TEST_CASE("movement, control, scope, priority and deadline syntax") {
    auto t = body("S := in @0 #k Room . acc out #k P . new T . kill T . exit . scope r in (r!(m)) "
                  ". @2 nil . dl(4) a?(_);");
    std::string text = renderTerm(t);
    CHECK(text.find("in @0 #k Room") != std::string::npos);
    CHECK(text.find("acc out #k P") != std::string::npos);
    CHECK(text.find("scope r in") != std::string::npos);
    CHECK(text.find("dl(4) a?(_)") != std::string::npos);
}

TEST_CASE("SEES parses to twelve definitions rooted at Sys") {
    auto r = parse(testing::readText(testing::corpusPath("sees.dtc")), "sees.dtc");
    REQUIRE(r.ok());
    CHECK(r.spec->root == "Sys");
    std::vector<std::string> names;
    for (const auto &d : r.spec->definitions)
        names.push_back(d.name);
    std::vector<std::string> expected = {"Sys",    "ControlSystem", "SensorA", "SensorB",
                                         "P1",     "P2",            "StairA",  "StairB",
                                         "Floor1", "Floor2",        "Building", "E911"};
    CHECK(names == expected);
}

TEST_CASE("syntax errors carry spans inside the input") {
    std::string text = "S := a!(x) .\n  ;";
    auto r = parse(text, "bad.dtc");
    CHECK_FALSE(r.ok());
    REQUIRE(r.diagnostics.size() == 1);
    CHECK(r.diagnostics[0].span.line == 2);
    CHECK(r.diagnostics[0].span.column == 3);
    auto dup = parse("S := nil; S := nil;", "dup.dtc");
    CHECK_FALSE(dup.ok());
    CHECK(dup.diagnostics[0].message.find("duplicate") != std::string::npos);
    CHECK_FALSE(parse("S := a$b;", "x").ok());
}

TEST_CASE("render round trips") {
    SUBCASE("SEES") {
        auto r = parse(testing::readText(testing::corpusPath("sees.dtc")), "sees.dtc");
        REQUIRE(r.ok());
        auto back = parse(render(*r.spec), "<render>");
        REQUIRE(back.ok());
        CHECK(sameSpec(*back.spec, *r.spec));
    }
    SUBCASE("500 generated specs") {
        testing::SpecGenerator gen(2024);
        for (int i = 0; i < 500; ++i) {
            std::string text = gen.next();
            auto r = parse(text, "<gen>");
            REQUIRE_MESSAGE(r.ok(), text);
            auto back = parse(render(*r.spec), "<render>");
            REQUIRE_MESSAGE(back.ok(), render(*r.spec));
            CHECK_MESSAGE(sameSpec(*back.spec, *r.spec), text);
        }
    }
    SUBCASE("empty spec renders empty") { CHECK(render(SpecFile{}).empty()); }
}

TEST_CASE("ITL view") {
    SUBCASE("SEES containment") {
        std::string dot = exportItl(testing::corpusSpec("sees.dtc"));
        auto building = dot.find("subgraph \"cluster_Building\"");
        REQUIRE(building != std::string::npos);
        auto e911 = dot.find("\"E911\";");
        REQUIRE(e911 != std::string::npos);
        // E911 is emitted after the Building cluster closes, at top level.
        CHECK(dot.find("\n  \"E911\";") != std::string::npos);
        CHECK(dot.find("\"cluster_StairA\"") != std::string::npos);
        CHECK(dot.find("\"cluster_Floor2\"") != std::string::npos);
        for (const char *n : {"\"ControlSystem\";", "\"SensorA\";", "\"SensorB\";", "\"Floor1\";",
                              "\"P1\";", "\"P2\";"})
            CHECK(dot.find(n) != std::string::npos);
    }
    SUBCASE("no channels, no edges") {
        std::string dot = exportItl(testing::spec("S := A | B; A := nil; B := nil;"));
        CHECK(count(dot, "->") == 0);
        CHECK(dot.find("\"A\";") != std::string::npos);
        CHECK(dot.find("\"B\";") != std::string::npos);
    }
    SUBCASE("shared channel edge") {
        std::string dot = exportItl(testing::spec("S := A | B; A := c!(m); B := c?(m);"));
        CHECK(dot.find("\"A\" -> \"B\" [label=\"c\", dir=none]") != std::string::npos);
    }
}

TEST_CASE("ITS view") {
    SUBCASE("single action") {
        std::string dot = exportIts(testing::spec("S := a!(x);"), "S");
        CHECK(dot.find("Start") != std::string::npos);
        CHECK(dot.find("Send\\\\na!(x)") != std::string::npos);
        CHECK(count(dot, "->") == 2);
    }
    SUBCASE("choice rejoins before the continuation") {
        std::string dot = exportIts(testing::spec("S := (a!(x)+b!(x)).c!(y);"), "S");
        CHECK(count(dot, "shape=diamond") == 2);
        CHECK(count(dot, "shape=box") == 3);
    }
    SUBCASE("SEES Building has a choice and exception edges") {
        std::string dot = exportIts(testing::corpusSpec("sees.dtc"), "Building");
        CHECK(dot.find("Receive\\\\nSA?(Fire)") != std::string::npos);
        CHECK(dot.find("shape=diamond") != std::string::npos);
        CHECK(count(dot, "style=dashed") >= 5);
    }
    SUBCASE("unknown definition") {
        CHECK_THROWS_AS(exportIts(testing::spec("S := nil;"), "Nope"), std::invalid_argument);
    }
}
