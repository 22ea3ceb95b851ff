#pragma once

// Single-run execution (replaying a recorded path or a seeded random walk)
// and export of the run as a geo-temporal (GTS) JSON trace.

#include "dtcal/semantics.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace dtcal {

struct TraceEvent {
    Ticks clock = 0; // clock at which the step fires
    Label label;
    Configuration after;
};

struct Trace {
    Configuration initial;
    std::vector<TraceEvent> events; // includes ticks
    Status status = Status::Running;
    bool truncated = false; // stopped by the clock or step bound

    const Configuration &final() const { return events.empty() ? initial : events.back().after; }
};

class Policy {
public:
    /// Follows labels exactly, leaf paths included.
    static Policy replay(std::vector<Label> labels);
    /// Picks uniformly among enabled steps with a 64-bit Mersenne Twister.
    static Policy random(std::uint64_t seed);

    bool isReplay() const { return replay_; }
    const std::vector<Label> &labels() const { return labels_; }
    std::uint64_t seed() const { return seed_; }

private:
    bool replay_ = false;
    std::vector<Label> labels_;
    std::uint64_t seed_ = 0;
};

struct SimOptions {
    Ticks maxClock = 40;
    std::size_t maxSteps = 100000;
};

/// Thrown when a replayed label is not enabled.
class ReplayError : public std::runtime_error {
public:
    ReplayError(std::size_t index, const std::string &what)
        : std::runtime_error(what), index_(index) {}
    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

Trace simulate(const Engine &engine, const Policy &policy, const SimOptions &options = {});

nlohmann::json labelToJson(const Label &label);

/// Lowercase hex SHA-256 of the rendered canonical specification.
std::string specDigest(const SpecFile &spec);

/// GTS trace: one entry per step (ticks included) with its clock, label and
/// either a full containment snapshot or the index of the last one. A run cut
/// by a bound ends with a "truncated" marker.
nlohmann::json traceToGts(const Engine &engine, const Trace &trace);

} // namespace dtcal
