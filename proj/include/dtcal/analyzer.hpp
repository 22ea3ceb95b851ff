#pragma once

// Requirement checking over the bounded execution paths of an LTS.
//
// A requirement file (.dtq) holds one requirement per line,
//     name: Form(args) [&& Form(args) ...]
// with `#` comments. Event patterns are `Kind(field, ...)` with `*`
// wildcards, alternatives joined by `|`:
//     Comm(channel, message, sender, receiver)   Move(kind, mover, from, to)
//     Ctrl(kind, subject)   Handler(def, cause)   Fault(def, cause)
//     Choice(def)   Rearm(def)
// Names are definition names; "root" is the top level.

#include "dtcal/diagnostic.hpp"
#include "dtcal/explorer.hpp"

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace dtcal {

struct LabelPattern {
    std::string kind;                // Comm, Move, Ctrl, Handler, Fault, Choice, Rearm
    std::vector<std::string> fields; // "*" matches anything; missing trailing fields too
};

/// Alternatives; matches when any alternative does.
struct EventPattern {
    std::vector<LabelPattern> alternatives;
    bool matches(const Label &label) const;
};

enum class ReqForm : std::uint8_t {
    DeadlockFree,
    AllPathsEventBy, // (p, deadline)
    ExistsEvent,     // (p)
    NeverEvent,      // (p)
    HandlerCoverage, // (definition or *): no fault in a matching instance
    Recurs,          // (p, gap): p occurs by `gap`, then at most `gap` apart up to the horizon
    NeverAfter,      // (trigger, forbidden)
    Responds,        // (trigger, response): every trigger is later answered
};
std::string_view reqFormName(ReqForm form);

struct Clause {
    ReqForm form = ReqForm::DeadlockFree;
    EventPattern first;
    EventPattern second;
    std::string instance; // HandlerCoverage
    Ticks bound = 0;      // deadline or gap
    std::string text;
};

struct Requirement {
    std::string name;
    std::vector<Clause> clauses; // conjunction
    std::string text;
    SourceSpan span;
};

struct ReqParseResult {
    std::vector<Requirement> requirements;
    Diagnostics diagnostics;
    bool ok() const { return !hasErrors(diagnostics); }
};

ReqParseResult parseRequirements(std::string_view text, std::string file = "<input>");

/// Parses a single pattern such as `Move(out, P1, Building, *)`.
std::optional<EventPattern> parsePattern(std::string_view text, std::string *error = nullptr);

struct Evidence {
    enum Kind { Witness, Counterexample } kind = Counterexample;
    std::size_t path = 0;    // index into the PathSet
    std::string reason;      // what happened on that path
};

struct Verdict {
    std::string name;
    std::string text;
    bool holds = false;
    bool boundRelative = false; // the LTS was truncated by a bound
    std::size_t checkedPaths = 0;
    std::optional<Evidence> evidence;
};

Verdict check(const Lts &lts, const PathSet &paths, const Requirement &req);

struct SuiteResult {
    std::vector<Verdict> verdicts;
    std::size_t held() const;
};

SuiteResult checkSuite(const Lts &lts, const PathSet &paths, const std::vector<Requirement> &reqs);

/// Clock at which each label of a path fires (ticks counted from 0).
std::vector<Ticks> labelClocks(const std::vector<Label> &labels);

std::string suiteToText(const Lts &lts, const PathSet &paths, const SuiteResult &result);
nlohmann::json suiteToJson(const Lts &lts, const PathSet &paths, const SuiteResult &result);

} // namespace dtcal
