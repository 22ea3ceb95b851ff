#include "dtcal/explorer.hpp"

#include "dtcal/simulator.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace dtcal {

std::string_view terminalName(Terminal t) {
    switch (t) {
    case Terminal::Terminated:
        return "terminated";
    case Terminal::Deadlock:
        return "deadlock";
    case Terminal::Fault:
        return "fault";
    case Terminal::Truncated:
        return "truncated";
    }
    return "?";
}

Terminal Lts::terminalOf(std::size_t state) const {
    switch (status[state]) {
    case Status::Fault:
        return Terminal::Fault;
    case Status::Terminated:
        return Terminal::Terminated;
    case Status::Deadlock:
        return Terminal::Deadlock;
    case Status::Running:
        break;
    }
    return Terminal::Truncated;
}

namespace {

class StateTable {
public:
    explicit StateTable(Lts &lts) : lts_(lts) {}

    // Returns the index of config, adding it if new.
    std::pair<std::size_t, bool> intern(Configuration config) {
        auto &bucket = index_[config.hash()];
        for (std::size_t i : bucket)
            if (lts_.states[i] == config)
                return {i, false};
        std::size_t id = lts_.states.size();
        lts_.states.push_back(std::move(config));
        lts_.successors.emplace_back();
        lts_.status.push_back(Status::Running);
        lts_.expanded.push_back(false);
        bucket.push_back(id);
        return {id, true};
    }

private:
    Lts &lts_;
    std::unordered_map<std::size_t, std::vector<std::size_t>> index_;
};

} // namespace

Lts buildLts(const Engine &engine, const ExploreBounds &bounds, unsigned jobs) {
    Lts lts;
    StateTable table(lts);
    table.intern(engine.init());
    std::vector<std::size_t> layer{0};
    jobs = std::max(1u, jobs);

    while (!layer.empty()) {
        // Which states of this layer get expanded.
        std::vector<std::size_t> work;
        for (std::size_t s : layer) {
            const Configuration &c = lts.states[s];
            if (!c.faults.empty()) {
                lts.status[s] = Status::Fault;
                continue;
            }
            if (c.clock >= bounds.maxClock) {
                lts.clockBoundHit = lts.clockBoundHit || !engine.enabledSteps(c).empty();
                lts.status[s] = engine.classify(c);
                continue;
            }
            work.push_back(s);
        }

        std::vector<std::vector<Step>> results(work.size());
        auto compute = [&](std::size_t begin, std::size_t stride) {
            for (std::size_t i = begin; i < work.size(); i += stride)
                results[i] = engine.enabledSteps(lts.states[work[i]]);
        };
        if (jobs == 1 || work.size() < 2) {
            compute(0, 1);
        } else {
            std::vector<std::thread> pool;
            unsigned n = std::min<std::size_t>(jobs, work.size());
            for (unsigned t = 0; t < n; ++t)
                pool.emplace_back(compute, t, n);
            for (auto &th : pool)
                th.join();
        }

        std::vector<std::size_t> next;
        for (std::size_t i = 0; i < work.size(); ++i) {
            std::size_t s = work[i];
            auto &steps = results[i];
            if (steps.empty()) {
                lts.status[s] = engine.classify(lts.states[s]);
                lts.expanded[s] = true;
                continue;
            }
            if (lts.states.size() + steps.size() > bounds.maxStates) {
                lts.stateBoundHit = true;
                continue;
            }
            lts.expanded[s] = true;
            for (auto &step : steps) {
                auto [to, fresh] = table.intern(std::move(step.result));
                lts.successors[s].push_back(lts.edges.size());
                lts.edges.push_back({s, to, std::move(step.label)});
                if (fresh)
                    next.push_back(to);
            }
        }
        layer = std::move(next);
    }
    return lts;
}

PathSet enumeratePaths(const Lts &lts, std::size_t maxPaths) {
    PathSet out;
    if (lts.states.empty())
        return out;
    struct Frame {
        std::size_t state;
        std::size_t next = 0;
    };
    std::vector<Frame> stack{{0}};
    std::vector<std::size_t> edges;
    std::vector<bool> onStack(lts.states.size(), false);
    onStack[0] = true;

    auto emit = [&](std::size_t state, Terminal terminal) {
        out.paths.push_back({edges, terminal, lts.states[state].clock});
    };

    while (!stack.empty()) {
        Frame &top = stack.back();
        const auto &succ = lts.successors[top.state];
        if (succ.empty() && top.next == 0) {
            emit(top.state, lts.terminalOf(top.state));
            top.next = 1;
        }
        if (out.paths.size() >= maxPaths) {
            out.limitHit = true;
            break;
        }
        if (top.next >= succ.size()) {
            onStack[top.state] = false;
            stack.pop_back();
            if (!edges.empty())
                edges.pop_back();
            continue;
        }
        std::size_t e = succ[top.next++];
        std::size_t to = lts.edges[e].to;
        edges.push_back(e);
        if (onStack[to]) {
            emit(to, Terminal::Truncated);
            edges.pop_back();
            continue;
        }
        onStack[to] = true;
        stack.push_back({to});
    }
    return out;
}

std::vector<Label> pathLabels(const Lts &lts, const ExecutionPath &path) {
    std::vector<Label> out;
    out.reserve(path.edges.size());
    for (std::size_t e : path.edges)
        out.push_back(lts.edges[e].label);
    return out;
}

std::vector<std::string> scenarioSignature(const std::vector<Label> &labels) {
    std::vector<std::string> out;
    std::vector<std::string> block;
    std::set<std::string> seen;
    auto flush = [&] {
        std::sort(block.begin(), block.end());
        for (auto &s : block)
            if (seen.insert(s).second)
                out.push_back(std::move(s));
        block.clear();
    };
    for (const auto &l : labels) {
        if (isTick(l))
            flush();
        else if (isObservable(l))
            block.push_back(renderLabel(l));
    }
    flush();
    return out;
}

std::vector<ScenarioClass> scenarioClasses(const Lts &lts, const PathSet &paths) {
    std::map<std::pair<Terminal, std::vector<std::string>>, ScenarioClass> classes;
    std::map<std::pair<Terminal, std::vector<std::string>>, std::vector<std::string>> best;
    for (std::size_t i = 0; i < paths.paths.size(); ++i) {
        const auto &p = paths.paths[i];
        auto labels = pathLabels(lts, p);
        auto key = std::make_pair(p.terminal, scenarioSignature(labels));
        std::vector<std::string> rendered;
        rendered.reserve(labels.size());
        for (const auto &l : labels)
            rendered.push_back(renderLabel(l));
        auto [it, fresh] = classes.try_emplace(key);
        ScenarioClass &cls = it->second;
        if (fresh) {
            cls.terminal = p.terminal;
            cls.signature = key.second;
            cls.representative = i;
            best[key] = std::move(rendered);
        } else if (rendered < best[key]) {
            cls.representative = i;
            best[key] = std::move(rendered);
        }
        cls.members.push_back(i);
    }
    std::vector<ScenarioClass> out;
    for (auto &[key, cls] : classes)
        out.push_back(std::move(cls));
    return out;
}

std::vector<DeadlockInfo> deadlockReport(const Engine &engine, const Lts &lts) {
    std::vector<DeadlockInfo> out;
    for (std::size_t s = 0; s < lts.states.size(); ++s)
        if (lts.status[s] == Status::Deadlock)
            out.push_back({s, lts.states[s].clock, engine.blocked(lts.states[s])});
    return out;
}

std::string ltsToDot(const Lts &lts) {
    std::ostringstream os;
    os << "digraph LTS {\n  node [shape=circle];\n";
    for (std::size_t s = 0; s < lts.states.size(); ++s) {
        os << "  s" << s << " [label=\"" << s << "\\nt=" << lts.states[s].clock << "\\n"
           << (lts.expanded[s] || lts.status[s] != Status::Running ? statusName(lts.status[s]) : "cut") << '"';
        if (s == 0)
            os << ", style=bold";
        if (lts.status[s] == Status::Deadlock || lts.status[s] == Status::Fault)
            os << ", color=red";
        else if (lts.status[s] == Status::Terminated)
            os << ", shape=doublecircle";
        else if (!lts.expanded[s])
            os << ", style=dashed";
        os << "];\n";
    }
    for (const auto &e : lts.edges) {
        std::string label = renderLabel(e.label);
        std::string escaped;
        for (char c : label) {
            if (c == '"' || c == '\\')
                escaped += '\\';
            escaped += c;
        }
        os << "  s" << e.from << " -> s" << e.to << " [label=\"" << escaped << "\"];\n";
    }
    os << "}\n";
    return os.str();
}

nlohmann::json ltsToJson(const Lts &lts) {
    nlohmann::json states = nlohmann::json::array();
    for (std::size_t s = 0; s < lts.states.size(); ++s)
        states.push_back({{"id", s},
                          {"clock", lts.states[s].clock},
                          {"status", std::string(statusName(lts.status[s]))},
                          {"expanded", static_cast<bool>(lts.expanded[s])}});
    nlohmann::json edges = nlohmann::json::array();
    for (const auto &e : lts.edges)
        edges.push_back({{"from", e.from}, {"to", e.to}, {"label", labelToJson(e.label)}});
    return {{"version", 1}, {"states", states}, {"edges", edges}, {"truncated", lts.truncated()}};
}

} // namespace dtcal
