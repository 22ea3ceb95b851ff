#pragma once

// Timed small-step semantics over a containment forest of process instances.
//
// A Configuration is an immutable value. Each instance carries its remaining
// behaviour as a runtime tree (rt::Node) whose leaves are activated actions
// with their live [ready, timeout, exec, deadline] counters; exception
// handlers, process deadlines and period state live on the inner nodes, so a
// handler always attaches to the innermost enclosing exception.

#include "dtcal/ast.hpp"

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace dtcal {

struct InstanceId {
    std::uint32_t value = 0;
    auto operator<=>(const InstanceId &) const = default;
};

// ---------------------------------------------------------------------------
// Runtime behaviour tree

enum class PhaseKind : std::uint8_t { Ready, Waiting, Executing };

/// Where an action is in its lifetime. remaining is the live r, to or e
/// counter (Unbounded only for a waiting action without timeout).
struct ActionPhase {
    PhaseKind kind = PhaseKind::Ready;
    Bound remaining;
    bool operator==(const ActionPhase &) const = default;
};

namespace rt {
class Node;
}
using NodePtr = std::shared_ptr<const rt::Node>;

namespace rt {

struct Stop {};
struct Leaf {
    Action action;
    TemporalSpec spec; // canonical template
    ActionPhase phase;
    Bound deadline; // counts down from the moment the action becomes head
};
struct Seq {
    NodePtr first;
    TermPtr rest;
};
/// An unresolved choice; both arms race and their timers run.
struct Choice {
    NodePtr left;
    NodePtr right;
};
struct Par {
    NodePtr left;
    NodePtr right;
};
struct Exception {
    NodePtr body;
    TermPtr handler;
};
struct Scope {
    std::string channel;
    NodePtr body;
};
struct Prio {
    Priority level;
    NodePtr body;
};
/// Process deadline (`dl(d) P`).
struct Timed {
    Ticks remaining = 0;
    NodePtr body;
};
/// A repeating body; body == Stop means idle until the period elapses.
struct Periodic {
    TermPtr templ;
    Ticks period = 1;
    Bound repsLeft;
    Ticks elapsed = 0;
    NodePtr body;
};

using NodeVariant = std::variant<Stop, Leaf, Seq, Choice, Par, Exception, Scope, Prio, Timed, Periodic>;

class Node {
public:
    explicit Node(NodeVariant v);
    const NodeVariant &get() const { return v_; }
    std::size_t hash() const { return hash_; }
    template <class T>
    const T *as() const {
        return std::get_if<T>(&v_);
    }
    template <class T>
    bool is() const {
        return std::holds_alternative<T>(v_);
    }

private:
    NodeVariant v_;
    std::size_t hash_;
};

bool sameNode(const NodePtr &a, const NodePtr &b);
NodePtr stop();

} // namespace rt

/// Child-index path from an instance's cursor root to a node.
using NodePath = std::vector<std::uint8_t>;

struct ProcessInstance {
    InstanceId id;
    std::string def;
    Priority priority;
    std::optional<InstanceId> parent;
    NodePtr cursor;

    bool terminated() const { return cursor->is<rt::Stop>(); }
};

enum class Cause : std::uint8_t { Timeout, Deadline, ProcDeadline, PeriodOverrun, KillDenied };
std::string_view causeName(Cause cause);

struct FaultRecord {
    InstanceId instance;
    std::string def;
    Cause cause = Cause::Timeout;
    Ticks clock = 0;
    bool operator==(const FaultRecord &) const = default;
};

struct Configuration {
    std::map<InstanceId, ProcessInstance> instances;
    Ticks clock = 0;
    std::uint32_t nextId = 0;
    std::vector<FaultRecord> faults;

    std::vector<InstanceId> roots() const;
    std::vector<InstanceId> children(InstanceId id) const;
    const ProcessInstance &at(InstanceId id) const { return instances.at(id); }
    std::size_t hash() const;
};

bool operator==(const Configuration &a, const Configuration &b);

// ---------------------------------------------------------------------------
// Labels

enum class CtrlKind : std::uint8_t { New, Kill, Exit };

struct TickLabel {
    bool operator==(const TickLabel &) const = default;
};
struct CommLabel {
    std::string channel;
    std::string message;
    InstanceId sender;
    InstanceId receiver;
    std::string senderDef;
    std::string receiverDef;
    NodePath senderLeaf;
    NodePath receiverLeaf;
    bool operator==(const CommLabel &) const = default;
};
struct MoveLabel {
    MoveKind kind = MoveKind::In;
    InstanceId mover;
    std::string moverDef;
    std::optional<InstanceId> from;
    std::optional<InstanceId> to;
    std::string fromDef; // "root" when at top level
    std::string toDef;
    std::optional<std::string> key;
    bool unilateral = false;
    InstanceId requester;
    NodePath requesterLeaf;
    std::optional<InstanceId> permitter;
    NodePath permitterLeaf;
    bool operator==(const MoveLabel &) const = default;
};
struct CtrlLabel {
    CtrlKind kind = CtrlKind::New;
    InstanceId actor;
    std::string actorDef;
    std::vector<InstanceId> subjects;
    std::string subjectDef;
    NodePath leaf;
    bool operator==(const CtrlLabel &) const = default;
};
struct HandlerLabel {
    InstanceId instance;
    std::string def;
    Cause cause = Cause::Timeout;
    NodePath site;
    bool operator==(const HandlerLabel &) const = default;
};
struct FaultLabel {
    InstanceId instance;
    std::string def;
    Cause cause = Cause::Timeout;
    NodePath site;
    bool operator==(const FaultLabel &) const = default;
};
struct ChoiceLabel {
    InstanceId instance;
    std::string def;
    std::uint32_t branch = 0;
    NodePath leaf;
    bool operator==(const ChoiceLabel &) const = default;
};
struct RearmLabel {
    InstanceId instance;
    std::string def;
    bool final = false; // last repetition: the periodic action ends instead of re-arming
    NodePath site;
    bool operator==(const RearmLabel &) const = default;
};

using Label = std::variant<TickLabel, CommLabel, MoveLabel, CtrlLabel, HandlerLabel, FaultLabel,
                           ChoiceLabel, RearmLabel>;

/// Stable human-readable rendering using definition names (no leaf paths).
std::string renderLabel(const Label &label);

/// Comm, Move, Ctrl, Handler and Fault labels; Tick, choice resolution and
/// period re-arming are internal.
bool isObservable(const Label &label);

inline bool isTick(const Label &label) { return std::holds_alternative<TickLabel>(label); }

struct Step {
    Label label;
    Configuration result;
};

enum class Status : std::uint8_t { Running, Terminated, Deadlock, Fault };
std::string_view statusName(Status status);

struct MoveCandidate {
    MoveLabel label;
};

/// A non-terminated instance of a state with no enabled steps, with the
/// actions it is stuck on.
struct BlockedInstance {
    InstanceId id;
    std::string def;
    std::vector<std::string> heads;
};

struct EngineOptions {
    /// Offer only a dependency-closed group of synchronizations per state
    /// instead of every interleaving. Quiescent states (those where time may
    /// pass or nothing is enabled) are reached either way.
    bool reduce = true;
};

class Engine {
public:
    /// spec must validate cleanly; it is canonicalized on construction.
    explicit Engine(const SpecFile &spec, EngineOptions options = {});

    const SpecFile &spec() const;

    Configuration init() const;

    /// All steps enabled in config, by tier: urgent zero-time steps, then
    /// synchronizations and choice resolutions, then timeouts, then Tick.
    std::vector<Step> enabledSteps(const Configuration &config) const;

    /// Returns step.result after checking that the step is enabled in config.
    /// Throws std::logic_error otherwise.
    Configuration applyStep(const Configuration &config, const Step &step) const;

    /// Applies the enabled step carrying exactly this label, if any.
    std::optional<Configuration> applyLabel(const Configuration &config, const Label &label) const;

    /// Every adjacency-respecting movement pairing (and unilateral out) in config.
    std::vector<MoveCandidate> matchMove(const Configuration &config) const;

    Status classify(const Configuration &config) const;

    std::vector<BlockedInstance> blocked(const Configuration &config) const;

private:
    class Impl;
    std::shared_ptr<const Impl> impl_;
};

} // namespace dtcal
