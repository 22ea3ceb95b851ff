#include "dtcal/simulator.hpp"

#include "dtcal/parser.hpp"

#include <iomanip>
#include <openssl/evp.h>
#include <random>
#include <sstream>

namespace dtcal {

Policy Policy::replay(std::vector<Label> labels) {
    Policy p;
    p.replay_ = true;
    p.labels_ = std::move(labels);
    return p;
}

Policy Policy::random(std::uint64_t seed) {
    Policy p;
    p.seed_ = seed;
    return p;
}

Trace simulate(const Engine &engine, const Policy &policy, const SimOptions &options) {
    Trace trace;
    trace.initial = engine.init();
    std::mt19937_64 rng(policy.seed());
    Configuration current = trace.initial;

    for (std::size_t i = 0;; ++i) {
        if (policy.isReplay() && i == policy.labels().size())
            break;
        if (!current.faults.empty())
            break;
        if (i >= options.maxSteps || current.clock >= options.maxClock) {
            trace.truncated = !engine.enabledSteps(current).empty();
            break;
        }
        auto steps = engine.enabledSteps(current);
        if (steps.empty())
            break;
        std::size_t pick = 0;
        if (policy.isReplay()) {
            const Label &want = policy.labels()[i];
            pick = steps.size();
            for (std::size_t k = 0; k < steps.size(); ++k)
                if (steps[k].label == want) {
                    pick = k;
                    break;
                }
            if (pick == steps.size())
                throw ReplayError(i, "replay step " + std::to_string(i) + " not enabled: " +
                                         renderLabel(want));
        } else {
            pick = static_cast<std::size_t>(rng() % steps.size());
        }
        Ticks clock = current.clock;
        current = std::move(steps[pick].result);
        trace.events.push_back({clock, std::move(steps[pick].label), current});
    }
    trace.status = engine.classify(trace.final());
    return trace;
}

namespace {

nlohmann::json optId(const std::optional<InstanceId> &id) {
    return id ? nlohmann::json(id->value) : nlohmann::json(nullptr);
}

nlohmann::json snapshot(const Configuration &c) {
    nlohmann::json parents = nlohmann::json::object();
    nlohmann::json defs = nlohmann::json::object();
    for (const auto &[id, inst] : c.instances) {
        std::string key = std::to_string(id.value);
        parents[key] = optId(inst.parent);
        defs[key] = inst.def;
    }
    return {{"parents", parents}, {"defs", defs}};
}

} // namespace

nlohmann::json labelToJson(const Label &label) {
    return std::visit(
        [](const auto &x) -> nlohmann::json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, TickLabel>)
                return {{"kind", "tick"}};
            else if constexpr (std::is_same_v<T, CommLabel>)
                return {{"kind", "comm"},           {"channel", x.channel},
                        {"message", x.message},     {"sender", x.sender.value},
                        {"receiver", x.receiver.value}, {"senderDef", x.senderDef},
                        {"receiverDef", x.receiverDef}};
            else if constexpr (std::is_same_v<T, MoveLabel>) {
                nlohmann::json j = {{"kind", "move"},
                                    {"move", std::string(moveKindName(x.kind))},
                                    {"mover", x.mover.value},
                                    {"moverDef", x.moverDef},
                                    {"from", optId(x.from)},
                                    {"fromDef", x.fromDef},
                                    {"to", optId(x.to)},
                                    {"toDef", x.toDef},
                                    {"unilateral", x.unilateral}};
                if (x.key)
                    j["key"] = *x.key;
                return j;
            } else if constexpr (std::is_same_v<T, CtrlLabel>) {
                static const char *names[] = {"new", "kill", "exit"};
                nlohmann::json subjects = nlohmann::json::array();
                for (auto s : x.subjects)
                    subjects.push_back(s.value);
                return {{"kind", "ctrl"},          {"ctrl", names[static_cast<int>(x.kind)]},
                        {"actor", x.actor.value},  {"actorDef", x.actorDef},
                        {"subjects", subjects},    {"subjectDef", x.subjectDef}};
            } else if constexpr (std::is_same_v<T, HandlerLabel> || std::is_same_v<T, FaultLabel>)
                return {{"kind", std::is_same_v<T, HandlerLabel> ? "handler" : "fault"},
                        {"instance", x.instance.value},
                        {"def", x.def},
                        {"cause", std::string(causeName(x.cause))}};
            else if constexpr (std::is_same_v<T, ChoiceLabel>)
                return {{"kind", "choice"}, {"instance", x.instance.value}, {"def", x.def},
                        {"branch", x.branch}};
            else
                return {{"kind", x.final ? "period-end" : "rearm"},
                        {"instance", x.instance.value},
                        {"def", x.def}};
        },
        label);
}

std::string specDigest(const SpecFile &spec) {
    std::string text = render(canonicalize(spec));
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i)
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return os.str();
}

nlohmann::json traceToGts(const Engine &engine, const Trace &trace) {
    nlohmann::json events = nlohmann::json::array();
    std::size_t lastSnapshot = 0;
    nlohmann::json last;
    for (const auto &e : trace.events) {
        nlohmann::json ev = {{"clock", e.clock}, {"label", labelToJson(e.label)}};
        // Moves and control actions always carry a snapshot; anything else
        // only when it changed the forest (e.g. a nest spawned by a handler).
        nlohmann::json snap = snapshot(e.after);
        bool full = events.empty() || std::holds_alternative<MoveLabel>(e.label) ||
                    std::holds_alternative<CtrlLabel>(e.label) || snap != last;
        if (full) {
            last = snap;
            ev["snapshot"] = std::move(snap);
            lastSnapshot = events.size();
        } else {
            ev["snapshotRef"] = lastSnapshot;
        }
        events.push_back(std::move(ev));
    }
    if (trace.truncated)
        events.push_back({{"clock", trace.final().clock},
                          {"label", {{"kind", "truncated"}}},
                          {"snapshotRef", lastSnapshot}});
    nlohmann::json out = {{"version", 1}, {"events", events}};
    if (!events.empty())
        out["spec"] = specDigest(engine.spec());
    return out;
}

} // namespace dtcal
