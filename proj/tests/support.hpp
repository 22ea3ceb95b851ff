#pragma once

// Shared helpers for the test executables: parsing shortcuts, corpus access
// and a seeded random specification generator.

#include "dtcal/parser.hpp"
#include "dtcal/semantics.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#ifndef DTCAL_CORPUS_DIR
#error "DTCAL_CORPUS_DIR must point at the corpus directory"
#endif

namespace testing {

inline std::string corpusPath(const std::string &rel) { return std::string(DTCAL_CORPUS_DIR) + "/" + rel; }

inline std::string readText(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Parses and validates, throwing with the diagnostics on failure.
inline dtcal::SpecFile spec(const std::string &text) {
    auto r = dtcal::parse(text, "<test>");
    std::ostringstream msg;
    for (const auto &d : r.diagnostics)
        msg << d << '\n';
    if (!r.ok())
        throw std::runtime_error("parse failed:\n" + msg.str());
    for (const auto &d : dtcal::validate(*r.spec))
        msg << d << '\n';
    if (!msg.str().empty())
        throw std::runtime_error("validation failed:\n" + msg.str());
    return *r.spec;
}

inline dtcal::SpecFile corpusSpec(const std::string &rel) { return spec(readText(corpusPath(rel))); }

/// Random specification text: a root that runs 1–6 processes in parallel
/// (optionally one container with a movable child), each a small term over
/// shared channels a, b, c with bounded temporal specs, choices, parallel
/// arms, exceptions, process deadlines and short periodic actions.
class SpecGenerator {
public:
    explicit SpecGenerator(std::uint64_t seed) : rng_(seed) {}

    std::string next() {
        std::ostringstream os;
        int procs = pick(1, 5);
        bool container = pick(0, 2) == 0;
        os << "Sys := ";
        for (int i = 0; i < procs; ++i)
            os << (i ? " | " : "") << "Q" << i;
        if (container)
            os << " | Box[Mover]";
        os << ";\n";
        for (int i = 0; i < procs; ++i)
            os << "Q" << i << " := " << term(2) << ";\n";
        if (container) {
            os << "Box := (acc out Mover" << spec(true) << ") \\ nil . " << term(1) << ";\n";
            os << "Mover := " << term(1) << " . out Box" << spec(true) << " \\ nil;\n";
        }
        return os.str();
    }

    int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

private:
    std::string bound(int lo, int hi) {
        return pick(0, 2) == 0 ? "-" : std::to_string(pick(lo, hi));
    }

    // A temporal spec: ready ≤ deadline always holds.
    std::string spec(bool sync) {
        if (pick(0, 2) == 0)
            return "";
        int ready = pick(0, 2);
        std::string to = sync ? bound(0, 3) : "-";
        int exec = pick(0, 2);
        std::string dl = pick(0, 3) == 0 ? std::to_string(ready + pick(exec, 4)) : "-";
        return "[" + std::to_string(ready) + "," + to + "," + std::to_string(exec) + "," + dl + "]";
    }

    std::string action() {
        static const char *chans[] = {"a", "b", "c"};
        static const char *msgs[] = {"x", "y"};
        std::string ch = chans[pick(0, 2)];
        std::string msg = msgs[pick(0, 1)];
        switch (pick(0, 5)) {
        case 0:
            return "nil(" + std::to_string(pick(0, 2)) + ")";
        case 1:
        case 2:
            return ch + "!(" + msg + ")" + spec(true);
        case 3:
        case 4:
            return ch + "?(" + (pick(0, 3) == 0 ? std::string("_") : msg) + ")" + spec(true);
        default:
            return "nil" + std::string(pick(0, 1) ? "" : "^(" + std::to_string(pick(2, 3)) + "," +
                                                           std::to_string(pick(1, 3)) + ")");
        }
    }

    std::string term(int depth) {
        if (depth == 0)
            return action();
        switch (pick(0, 7)) {
        case 0:
            return "(" + term(depth - 1) + " + " + term(depth - 1) + ")";
        case 1:
            return "(" + term(depth - 1) + " | " + term(depth - 1) + ")";
        case 2:
            return "(" + term(depth - 1) + ") \\ nil(" + std::to_string(pick(0, 2)) + ")";
        case 3:
            return "dl(" + std::to_string(pick(2, 6)) + ") (" + term(depth - 1) + ")";
        default:
            return action() + " . " + term(depth - 1);
        }
    }

    std::mt19937_64 rng_;
};

} // namespace testing
