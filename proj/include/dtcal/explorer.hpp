#pragma once

// Bounded state-space exploration, execution paths and scenario classes.

#include "dtcal/semantics.hpp"

#include <cstddef>
#include <json.hpp>
#include <string>
#include <vector>

namespace dtcal {

struct ExploreBounds {
    /// States at or beyond this clock are kept but not expanded.
    Ticks maxClock = 40;
    /// Exploration stops adding states once this many exist.
    std::size_t maxStates = 200000;
};

struct LtsEdge {
    std::size_t from = 0;
    std::size_t to = 0;
    Label label;
};

enum class Terminal : std::uint8_t { Terminated, Deadlock, Fault, Truncated };
std::string_view terminalName(Terminal t);

struct Lts {
    std::vector<Configuration> states; // states[0] is the initial configuration
    std::vector<LtsEdge> edges;
    std::vector<std::vector<std::size_t>> successors; // edge indices per state
    std::vector<Status> status;
    std::vector<bool> expanded; // false for states cut by a bound
    bool clockBoundHit = false;
    bool stateBoundHit = false;

    bool truncated() const { return clockBoundHit || stateBoundHit; }
    /// Why a state with no outgoing edges ends a run.
    Terminal terminalOf(std::size_t state) const;
};

/// Breadth-first construction. With jobs > 1 the successors of a layer are
/// computed in parallel; states are numbered exactly as with jobs == 1.
/// Fault states are not expanded.
Lts buildLts(const Engine &engine, const ExploreBounds &bounds, unsigned jobs = 1);

struct ExecutionPath {
    std::vector<std::size_t> edges; // edge indices into the LTS
    Terminal terminal = Terminal::Terminated;
    Ticks finalClock = 0;
};

struct PathSet {
    std::vector<ExecutionPath> paths;
    bool limitHit = false; // stopped after maxPaths
};

/// Every maximal path from the initial state, in depth-first order. A path
/// revisiting a state on the current stack ends there as Truncated.
PathSet enumeratePaths(const Lts &lts, std::size_t maxPaths = 1000000);

std::vector<Label> pathLabels(const Lts &lts, const ExecutionPath &path);

/// Observable behaviour of a run: labels rendered by definition name, sorted
/// within each stretch between ticks, later repeats of a label dropped.
std::vector<std::string> scenarioSignature(const std::vector<Label> &labels);

struct ScenarioClass {
    Terminal terminal = Terminal::Terminated;
    std::vector<std::string> signature;
    std::vector<std::size_t> members; // indices into PathSet::paths
    std::size_t representative = 0;   // member with the least rendered label list
};

/// Classes ordered by (terminal, signature).
std::vector<ScenarioClass> scenarioClasses(const Lts &lts, const PathSet &paths);

struct DeadlockInfo {
    std::size_t state = 0;
    Ticks clock = 0;
    std::vector<BlockedInstance> blocked;
};

std::vector<DeadlockInfo> deadlockReport(const Engine &engine, const Lts &lts);

std::string ltsToDot(const Lts &lts);

/// States with clock, status and expansion flag; edges carry labels in the
/// same JSON form as simulator traces.
nlohmann::json ltsToJson(const Lts &lts);

} // namespace dtcal
