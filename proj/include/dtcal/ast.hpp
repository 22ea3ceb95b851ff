#pragma once

// Abstract syntax of dT-Calculus specifications.
//
// Terms are immutable and shared through TermPtr; every node caches a
// structural hash computed at construction, so equal terms hash equally
// regardless of how they were built.

#include "dtcal/diagnostic.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dtcal {

using Ticks = std::uint32_t;

/// A tick count that may be Unbounded (std::nullopt), written `-` in source.
using Bound = std::optional<Ticks>;

struct TemporalSpec {
    Ticks ready = 0;
    Bound timeout;
    Ticks exec = 1;
    Bound deadline;

    /// [0,-,1,-], the spec of an action written without one.
    static TemporalSpec defaults() { return {}; }

    bool operator==(const TemporalSpec &) const = default;
};

/// Repetition `^(period, reps)`; reps == nullopt means infinite.
struct PeriodSpec {
    Ticks period = 1;
    Bound reps;

    bool operator==(const PeriodSpec &) const = default;
};

/// Process priority. Level 0 outranks everything; otherwise the larger level wins.
struct Priority {
    std::uint32_t level = 1;

    bool higherThan(Priority other) const {
        if (level == other.level)
            return false;
        if (level == 0)
            return true;
        if (other.level == 0)
            return false;
        return level > other.level;
    }

    bool operator==(const Priority &) const = default;
};

inline constexpr std::uint32_t kDefaultPriority = 1;

enum class MoveKind : std::uint8_t { In, Out, Get, Put };

std::string_view moveKindName(MoveKind kind);

namespace act {

struct Empty {
    Ticks exec = 1;
    bool operator==(const Empty &) const = default;
};
struct Send {
    std::string channel;
    std::string message;
    bool operator==(const Send &) const = default;
};
/// pattern is a literal message name or "_" (matches anything).
struct Receive {
    std::string channel;
    std::string pattern;
    bool operator==(const Receive &) const = default;
};
struct MoveRequest {
    MoveKind kind = MoveKind::In;
    std::string target;
    std::optional<std::string> key;
    std::optional<Priority> prio;
    bool operator==(const MoveRequest &) const = default;
};
struct MovePermit {
    MoveKind kind = MoveKind::In;
    std::string subject;
    std::optional<std::string> key;
    bool operator==(const MovePermit &) const = default;
};
struct New {
    std::string def;
    bool operator==(const New &) const = default;
};
struct Kill {
    std::string proc;
    bool operator==(const Kill &) const = default;
};
struct Exit {
    bool operator==(const Exit &) const = default;
};

} // namespace act

using Action = std::variant<act::Empty, act::Send, act::Receive, act::MoveRequest, act::MovePermit,
                            act::New, act::Kill, act::Exit>;

/// Short human-readable form, e.g. `a!(x)`, `out Floor2`, `acc in P1`.
std::string describe(const Action &action);
std::string describe(const TemporalSpec &spec);
std::string describe(const PeriodSpec &spec);

/// Actions that synchronize with a partner (communication and movement).
bool isSynchronous(const Action &action);

class Term;
using TermPtr = std::shared_ptr<const Term>;

namespace term {

struct Act {
    Action action;
    std::optional<TemporalSpec> temporal;
    std::optional<PeriodSpec> period;
};
struct Seq {
    TermPtr first;
    TermPtr rest;
};
struct Choice {
    TermPtr left;
    TermPtr right;
};
struct Par {
    TermPtr left;
    TermPtr right;
};
/// `Name[children]`; children is null for `Name[]`.
struct Nest {
    std::string def;
    TermPtr children;
};
struct Exception {
    TermPtr body;
    TermPtr handler;
};
struct ChannelScope {
    std::string channel;
    TermPtr body;
};
struct WithPriority {
    Priority level;
    TermPtr body;
};
/// A process with a temporal spec. Only the deadline is semantically live;
/// deadlineOnly records whether the source used `dl(d) P` or a full `[r,to,e,d]`.
struct TimedProc {
    TermPtr body;
    TemporalSpec spec;
    bool deadlineOnly = true;
};
/// A parenthesized group with a period, `(P)^(p,n)`.
struct Repeat {
    TermPtr body;
    PeriodSpec period;
};
struct Ref {
    std::string def;
};
struct Stop {};

} // namespace term

using TermNode = std::variant<term::Act, term::Seq, term::Choice, term::Par, term::Nest,
                              term::Exception, term::ChannelScope, term::WithPriority,
                              term::TimedProc, term::Repeat, term::Ref, term::Stop>;

class Term {
public:
    Term(TermNode node);

    const TermNode &node() const { return node_; }
    std::size_t hash() const { return hash_; }

    template <class T>
    const T *as() const {
        return std::get_if<T>(&node_);
    }
    template <class T>
    bool is() const {
        return std::holds_alternative<T>(node_);
    }

private:
    TermNode node_;
    std::size_t hash_;
};

/// Deep structural equality (null == null).
bool sameTerm(const TermPtr &a, const TermPtr &b);

namespace mk {
TermPtr act(Action action, std::optional<TemporalSpec> temporal = std::nullopt,
            std::optional<PeriodSpec> period = std::nullopt);
TermPtr seq(TermPtr first, TermPtr rest);
TermPtr choice(TermPtr left, TermPtr right);
TermPtr par(TermPtr left, TermPtr right);
TermPtr nest(std::string def, TermPtr children = nullptr);
TermPtr exception(TermPtr body, TermPtr handler);
TermPtr scope(std::string channel, TermPtr body);
TermPtr priority(Priority level, TermPtr body);
TermPtr timed(TermPtr body, TemporalSpec spec, bool deadlineOnly);
TermPtr dl(TermPtr body, Ticks deadline);
TermPtr repeat(TermPtr body, PeriodSpec period);
TermPtr ref(std::string def);
TermPtr stop();
} // namespace mk

struct Definition {
    std::string name;
    TermPtr body;
    SourceSpan span;
};

/// A parsed specification. The root is the entry definition (the first one in source).
struct SpecFile {
    std::vector<Definition> definitions;
    std::string root;

    const Definition *find(std::string_view name) const;
    bool empty() const { return definitions.empty(); }
};

/// Structural equality of definitions (names, order, bodies, root); spans ignored.
bool sameSpec(const SpecFile &a, const SpecFile &b);

/// Static checks: unresolved names, unguarded recursion, statically dead deadlines,
/// ill-formed periods, and `new` of a definition that would outrank its creator.
Diagnostics validate(const SpecFile &spec);

/// Applies the temporal laws: default specs on bare actions, exec-only Empty,
/// deadline-only timed processes. Idempotent.
TermPtr canonicalize(const TermPtr &term);
SpecFile canonicalize(const SpecFile &spec);

/// Channels used by Send/Receive that are not bound by an enclosing scope.
std::set<std::string> freeChannels(const TermPtr &term);

} // namespace dtcal
