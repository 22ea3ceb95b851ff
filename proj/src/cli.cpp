#include "dtcal/cli.hpp"

#include "dtcal/analyzer.hpp"
#include "dtcal/explorer.hpp"
#include "dtcal/parser.hpp"
#include "dtcal/simulator.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

namespace dtcal::cli {

namespace {

struct Settings {
    Ticks maxClock = 40;
    std::size_t maxStates = 200000;
    unsigned jobs = 1;
    std::optional<std::uint64_t> seed;
};

std::string trim(const std::string &s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// Reads `key = value` settings; unknown keys and bad values are reported.
bool loadConfig(const std::string &path, Settings &s, std::ostream &err) {
    std::ifstream in(path);
    if (!in)
        return true;
    std::string line;
    int lineNo = 0;
    bool ok = true;
    while (std::getline(in, line)) {
        ++lineNo;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty() || line.front() == '[')
            continue;
        auto eq = line.find('=');
        std::string key = trim(line.substr(0, eq));
        std::string value = eq == std::string::npos ? "" : trim(line.substr(eq + 1));
        std::replace(key.begin(), key.end(), '_', '-');
        try {
            if (key == "max-clock")
                s.maxClock = static_cast<Ticks>(std::stoul(value));
            else if (key == "max-states")
                s.maxStates = std::stoull(value);
            else if (key == "jobs")
                s.jobs = static_cast<unsigned>(std::stoul(value));
            else if (key == "seed")
                s.seed = std::stoull(value);
            else
                throw std::invalid_argument("unknown key");
        } catch (const std::exception &) {
            err << path << ':' << lineNo << ": error: bad setting '" << line << "'\n";
            ok = false;
        }
    }
    return ok;
}

bool readFile(const std::string &path, std::string &text, std::ostream &err) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        err << path << ": error: cannot open file\n";
        return false;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
    return true;
}

std::optional<SpecFile> loadSpec(const std::string &path, std::ostream &err) {
    std::string text;
    if (!readFile(path, text, err))
        return std::nullopt;
    ParseResult parsed = parse(text, path);
    for (const auto &d : parsed.diagnostics)
        err << d << '\n';
    if (!parsed.ok())
        return std::nullopt;
    Diagnostics diags = validate(*parsed.spec);
    for (const auto &d : diags)
        err << d << '\n';
    if (hasErrors(diags))
        return std::nullopt;
    return parsed.spec;
}

struct Explored {
    Lts lts;
    PathSet paths;
    std::vector<ScenarioClass> classes;
};

Explored explore(const Engine &engine, const Settings &s) {
    Explored x;
    x.lts = buildLts(engine, {s.maxClock, s.maxStates}, s.jobs);
    x.paths = enumeratePaths(x.lts);
    x.classes = scenarioClasses(x.lts, x.paths);
    return x;
}

std::size_t countTerminal(const std::vector<ScenarioClass> &classes, Terminal t) {
    return static_cast<std::size_t>(std::count_if(classes.begin(), classes.end(),
                                                  [&](const ScenarioClass &c) { return c.terminal == t; }));
}

void writePathsText(std::ostream &out, const Engine &engine, const Explored &x) {
    out << x.classes.size() << " scenario classes; " << countTerminal(x.classes, Terminal::Deadlock)
        << " deadlock, " << countTerminal(x.classes, Terminal::Fault) << " fault\n";
    out << x.lts.states.size() << " states, " << x.lts.edges.size() << " transitions, "
        << x.paths.paths.size() << " paths";
    if (x.lts.truncated())
        out << " (bounded)";
    out << '\n';
    for (std::size_t i = 0; i < x.classes.size(); ++i) {
        const auto &c = x.classes[i];
        out << "\nclass " << i << ": " << terminalName(c.terminal) << ", " << c.members.size()
            << (c.members.size() == 1 ? " path\n" : " paths\n");
        for (const auto &s : c.signature)
            out << "  " << s << '\n';
    }
    auto deadlocks = deadlockReport(engine, x.lts);
    for (const auto &d : deadlocks) {
        out << "\ndeadlock in state " << d.state << " at clock " << d.clock << '\n';
        for (const auto &b : d.blocked) {
            out << "  " << b.def << " #" << b.id.value << ':';
            for (const auto &h : b.heads)
                out << ' ' << h;
            out << '\n';
        }
    }
}

nlohmann::json pathsJson(const Explored &x) {
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t i = 0; i < x.classes.size(); ++i) {
        const auto &c = x.classes[i];
        nlohmann::json labels = nlohmann::json::array();
        for (const auto &l : pathLabels(x.lts, x.paths.paths[c.representative]))
            labels.push_back(renderLabel(l));
        classes.push_back({{"index", i},
                           {"terminal", std::string(terminalName(c.terminal))},
                           {"members", c.members.size()},
                           {"signature", c.signature},
                           {"representative", {{"path", c.representative}, {"labels", labels}}}});
    }
    return {{"classes", classes},
            {"summary",
             {{"classes", x.classes.size()},
              {"deadlock", countTerminal(x.classes, Terminal::Deadlock)},
              {"fault", countTerminal(x.classes, Terminal::Fault)},
              {"states", x.lts.states.size()},
              {"transitions", x.lts.edges.size()},
              {"paths", x.paths.paths.size()},
              {"truncated", x.lts.truncated()}}}};
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    Settings settings;
    if (!loadConfig("dtcal.toml", settings, err))
        return 2;

    CLI::App app{"dT-Calculus toolkit: parse, explore, simulate and verify timed mobile process specs",
                 "dtcal"};
    app.require_subcommand(1);

    std::string specPath, reqPath, outPath, itsName;
    bool json = false, dot = false, ltsJson = false, itl = false;
    std::optional<std::size_t> pathIndex;
    std::optional<std::uint64_t> seed;

    auto common = [&](CLI::App *sub) {
        sub->add_option("--max-clock", settings.maxClock, "States at this clock are not expanded");
        sub->add_option("--max-states", settings.maxStates, "State-space size limit");
        sub->add_option("--jobs", settings.jobs, "Worker threads for exploration")
            ->check(CLI::PositiveNumber);
    };

    auto *check = app.add_subcommand("check", "Parse and validate a specification");
    check->add_option("spec", specPath, "Specification (.dtc)")->required();

    auto *paths = app.add_subcommand("paths", "Enumerate execution paths and scenario classes");
    paths->add_option("spec", specPath, "Specification (.dtc)")->required();
    auto *dotFlag = paths->add_flag("--dot", dot, "Emit the execution model as DOT");
    auto *jsonFlag = paths->add_flag("--json", json, "Machine-readable output")->excludes(dotFlag);
    paths->add_flag("--lts-json", ltsJson, "Emit the execution model as JSON")->excludes(dotFlag, jsonFlag);
    common(paths);

    auto *simulate = app.add_subcommand("simulate", "Run one path or a seeded random run as a GTS trace");
    simulate->add_option("spec", specPath, "Specification (.dtc)")->required();
    auto *pathOpt = simulate->add_option("--path", pathIndex, "Scenario class index, as listed by paths");
    simulate->add_option("--seed", seed, "Seed for a random run")->excludes(pathOpt);
    simulate->add_option("-o,--output", outPath, "Write the trace to this file");
    simulate->add_flag("--json", json, "Accepted for symmetry; traces are always JSON");
    common(simulate);

    auto *verify = app.add_subcommand("verify", "Check requirements over all paths");
    verify->add_option("spec", specPath, "Specification (.dtc)")->required();
    verify->add_option("reqs", reqPath, "Requirements (.dtq)")->required();
    verify->add_flag("--json", json, "Machine-readable output");
    common(verify);

    auto *renderCmd = app.add_subcommand("render", "Emit the ITL or an ITS view as DOT");
    renderCmd->add_option("spec", specPath, "Specification (.dtc)")->required();
    auto *itlFlag = renderCmd->add_flag("--itl", itl, "System view");
    auto *itsOpt = renderCmd->add_option("--its", itsName, "Process view of one definition");
    itlFlag->excludes(itsOpt);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError &e) {
        std::ostringstream o, r;
        int code = app.exit(e, o, r);
        out << o.str();
        err << r.str();
        return code == 0 ? 0 : 2;
    }
    if (!seed)
        seed = settings.seed;

    auto spec = loadSpec(specPath, err);
    if (!spec)
        return 2;

    if (check->parsed()) {
        out << specPath << ": ok, " << spec->definitions.size() << " definitions, root "
            << spec->root << '\n';
        return 0;
    }

    if (renderCmd->parsed()) {
        if (!itl && itsName.empty()) {
            err << "render: one of --itl or --its <Name> is required\n";
            return 2;
        }
        try {
            out << (itl ? exportItl(*spec) : exportIts(*spec, itsName));
        } catch (const std::invalid_argument &e) {
            err << "render: " << e.what() << '\n';
            return 2;
        }
        return 0;
    }

    Engine engine(*spec);

    if (paths->parsed()) {
        Explored x = explore(engine, settings);
        if (dot)
            out << ltsToDot(x.lts);
        else if (ltsJson)
            out << ltsToJson(x.lts).dump(2) << '\n';
        else if (json)
            out << pathsJson(x).dump(2) << '\n';
        else
            writePathsText(out, engine, x);
        return 0;
    }

    if (simulate->parsed()) {
        SimOptions opts{settings.maxClock, 100000};
        Policy policy = Policy::random(seed.value_or(0));
        if (pathIndex) {
            Explored x = explore(engine, settings);
            if (*pathIndex >= x.classes.size()) {
                err << "simulate: class index " << *pathIndex << " out of range (" << x.classes.size()
                    << " classes)\n";
                return 2;
            }
            const auto &cls = x.classes[*pathIndex];
            policy = Policy::replay(pathLabels(x.lts, x.paths.paths[cls.representative]));
        } else if (!seed) {
            err << "simulate: one of --path <class> or --seed <N> is required\n";
            return 2;
        }
        Trace trace;
        try {
            trace = dtcal::simulate(engine, policy, opts);
        } catch (const ReplayError &e) {
            err << "simulate: " << e.what() << '\n';
            return 2;
        }
        std::string text = traceToGts(engine, trace).dump(2) + "\n";
        if (outPath.empty()) {
            out << text;
        } else {
            std::ofstream f(outPath, std::ios::binary);
            if (!(f << text)) {
                err << outPath << ": error: cannot write file\n";
                return 2;
            }
        }
        return 0;
    }

    // verify
    std::string reqText;
    if (!readFile(reqPath, reqText, err))
        return 2;
    ReqParseResult reqs = parseRequirements(reqText, reqPath);
    for (const auto &d : reqs.diagnostics)
        err << d << '\n';
    if (!reqs.ok())
        return 2;
    Explored x = explore(engine, settings);
    SuiteResult result = checkSuite(x.lts, x.paths, reqs.requirements);
    if (json)
        out << suiteToJson(x.lts, x.paths, result).dump(2) << '\n';
    else
        out << suiteToText(x.lts, x.paths, result);
    return result.held() == result.verdicts.size() ? 0 : 1;
}

} // namespace dtcal::cli
