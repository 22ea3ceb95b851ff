#include "dtcal/analyzer.hpp"

#include "dtcal/simulator.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace dtcal {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
    for (char &c : s)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Splits on `sep` at parenthesis depth 0.
std::vector<std::string> splitTop(std::string_view s, std::string_view sep) {
    std::vector<std::string> out;
    int depth = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '(')
            ++depth;
        else if (s[i] == ')')
            --depth;
        else if (depth == 0 && s.substr(i, sep.size()) == sep) {
            out.push_back(trim(s.substr(start, i - start)));
            start = i + sep.size();
            i += sep.size() - 1;
        }
    }
    out.push_back(trim(s.substr(start)));
    return out;
}

// `Name(args)` -> name and comma-separated top-level args.
bool splitCall(std::string_view text, std::string &name, std::vector<std::string> &args,
               std::string *error) {
    std::string s = trim(text);
    std::size_t open = s.find('(');
    if (open == std::string::npos) {
        name = s;
        args.clear();
        return !name.empty();
    }
    if (s.back() != ')') {
        if (error)
            *error = "missing ')' in '" + s + "'";
        return false;
    }
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        if (s[i] == '(')
            ++depth;
        else if (s[i] == ')' && --depth == 0 && i != s.size() - 1) {
            if (error)
                *error = "unexpected text after ')' in '" + s + "'";
            return false;
        }
    }
    if (depth != 0) {
        if (error)
            *error = "unbalanced parentheses in '" + s + "'";
        return false;
    }
    name = trim(s.substr(0, open));
    std::string inner = s.substr(open + 1, s.size() - open - 2);
    args = trim(inner).empty() ? std::vector<std::string>{} : splitTop(inner, ",");
    return true;
}

bool fieldMatches(const std::string &pattern, std::string_view value) {
    return pattern == "*" || pattern == value;
}

bool fieldMatchesCi(const std::string &pattern, std::string_view value) {
    return pattern == "*" || lower(pattern) == lower(std::string(value));
}

const std::vector<std::string> kKinds = {"Comm", "Move", "Ctrl", "Handler", "Fault", "Choice", "Rearm"};
const std::vector<std::size_t> kArity = {4, 4, 2, 2, 2, 1, 1};

bool labelMatches(const LabelPattern &p, const Label &label) {
    auto f = [&](std::size_t i) -> const std::string & {
        static const std::string any = "*";
        return i < p.fields.size() ? p.fields[i] : any;
    };
    return std::visit(
        [&](const auto &x) -> bool {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, CommLabel>)
                return p.kind == "Comm" && fieldMatches(f(0), x.channel) &&
                       fieldMatches(f(1), x.message) && fieldMatches(f(2), x.senderDef) &&
                       fieldMatches(f(3), x.receiverDef);
            else if constexpr (std::is_same_v<T, MoveLabel>)
                return p.kind == "Move" && fieldMatchesCi(f(0), moveKindName(x.kind)) &&
                       fieldMatches(f(1), x.moverDef) && fieldMatches(f(2), x.fromDef) &&
                       fieldMatches(f(3), x.toDef);
            else if constexpr (std::is_same_v<T, CtrlLabel>) {
                static const char *names[] = {"new", "kill", "exit"};
                return p.kind == "Ctrl" && fieldMatchesCi(f(0), names[static_cast<int>(x.kind)]) &&
                       fieldMatches(f(1), x.subjectDef);
            } else if constexpr (std::is_same_v<T, HandlerLabel>)
                return p.kind == "Handler" && fieldMatches(f(0), x.def) &&
                       fieldMatchesCi(f(1), causeName(x.cause));
            else if constexpr (std::is_same_v<T, FaultLabel>)
                return p.kind == "Fault" && fieldMatches(f(0), x.def) &&
                       fieldMatchesCi(f(1), causeName(x.cause));
            else if constexpr (std::is_same_v<T, ChoiceLabel>)
                return p.kind == "Choice" && fieldMatches(f(0), x.def);
            else if constexpr (std::is_same_v<T, RearmLabel>)
                return p.kind == "Rearm" && fieldMatches(f(0), x.def);
            else
                return false;
        },
        label);
}

bool parseTicks(const std::string &s, Ticks &out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

struct ClauseSpec {
    ReqForm form;
    const char *name;
    std::size_t arity;
};

const std::vector<ClauseSpec> kForms = {
    {ReqForm::DeadlockFree, "DeadlockFree", 0},   {ReqForm::AllPathsEventBy, "AllPathsEventBy", 2},
    {ReqForm::ExistsEvent, "ExistsEvent", 1},     {ReqForm::NeverEvent, "NeverEvent", 1},
    {ReqForm::HandlerCoverage, "HandlerCoverage", 1}, {ReqForm::Recurs, "Recurs", 2},
    {ReqForm::NeverAfter, "NeverAfter", 2},       {ReqForm::Responds, "Responds", 2},
};

std::optional<Clause> parseClause(const std::string &text, std::string &error) {
    std::string name;
    std::vector<std::string> args;
    if (!splitCall(text, name, args, &error))
        return std::nullopt;
    auto spec = std::find_if(kForms.begin(), kForms.end(),
                             [&](const ClauseSpec &c) { return name == c.name; });
    if (spec == kForms.end()) {
        error = "unknown requirement form '" + name + "'";
        return std::nullopt;
    }
    if (args.size() != spec->arity) {
        error = name + " takes " + std::to_string(spec->arity) + " argument(s), got " +
                std::to_string(args.size());
        return std::nullopt;
    }
    Clause c;
    c.form = spec->form;
    c.text = trim(text);
    auto pattern = [&](const std::string &arg, EventPattern &out) {
        auto p = parsePattern(arg, &error);
        if (!p)
            return false;
        out = *p;
        return true;
    };
    switch (c.form) {
    case ReqForm::DeadlockFree:
        break;
    case ReqForm::AllPathsEventBy:
    case ReqForm::Recurs:
        if (!pattern(args[0], c.first))
            return std::nullopt;
        if (!parseTicks(args[1], c.bound)) {
            error = "expected a tick count, found '" + args[1] + "'";
            return std::nullopt;
        }
        break;
    case ReqForm::ExistsEvent:
    case ReqForm::NeverEvent:
        if (!pattern(args[0], c.first))
            return std::nullopt;
        break;
    case ReqForm::HandlerCoverage:
        c.instance = args[0];
        break;
    case ReqForm::NeverAfter:
    case ReqForm::Responds:
        if (!pattern(args[0], c.first) || !pattern(args[1], c.second))
            return std::nullopt;
        break;
    }
    return c;
}

struct PathView {
    std::vector<Label> labels;
    std::vector<Ticks> clocks;
};

// Result of one clause on one path: empty when satisfied, else the reason.
using PathCheck = std::optional<std::string>;

std::optional<std::size_t> firstMatch(const PathView &v, const EventPattern &p, std::size_t from = 0) {
    for (std::size_t i = from; i < v.labels.size(); ++i)
        if (p.matches(v.labels[i]))
            return i;
    return std::nullopt;
}

std::string at(const PathView &v, std::size_t i) {
    return renderLabel(v.labels[i]) + " at clock " + std::to_string(v.clocks[i]);
}

} // namespace

std::string_view reqFormName(ReqForm form) {
    for (const auto &f : kForms)
        if (f.form == form)
            return f.name;
    return "?";
}

bool EventPattern::matches(const Label &label) const {
    return std::any_of(alternatives.begin(), alternatives.end(),
                       [&](const LabelPattern &p) { return labelMatches(p, label); });
}

std::optional<EventPattern> parsePattern(std::string_view text, std::string *error) {
    EventPattern out;
    for (const auto &alt : splitTop(text, "|")) {
        LabelPattern p;
        if (!splitCall(alt, p.kind, p.fields, error))
            return std::nullopt;
        auto k = std::find(kKinds.begin(), kKinds.end(), p.kind);
        if (k == kKinds.end()) {
            if (error)
                *error = "unknown event kind '" + p.kind + "'";
            return std::nullopt;
        }
        std::size_t arity = kArity[static_cast<std::size_t>(k - kKinds.begin())];
        if (p.fields.size() > arity) {
            if (error)
                *error = p.kind + " patterns take at most " + std::to_string(arity) + " fields";
            return std::nullopt;
        }
        for (const auto &f : p.fields)
            if (f.empty()) {
                if (error)
                    *error = "empty field in pattern '" + alt + "'";
                return std::nullopt;
            }
        out.alternatives.push_back(std::move(p));
    }
    return out;
}

ReqParseResult parseRequirements(std::string_view text, std::string file) {
    ReqParseResult result;
    std::uint32_t lineNo = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineNo;
        std::string line(raw.substr(0, raw.find('#')));
        if (trim(line).empty())
            continue;
        std::size_t indent = line.find_first_not_of(" \t");
        SourceSpan span{file, lineNo, static_cast<std::uint32_t>(indent + 1),
                        static_cast<std::uint32_t>(trim(line).size())};
        std::size_t colon = line.find(':');
        if (colon == std::string::npos) {
            result.diagnostics.push_back({Severity::Error, "expected '<name>: <requirement>'", span});
            continue;
        }
        Requirement req;
        req.name = trim(line.substr(0, colon));
        req.text = trim(line.substr(colon + 1));
        req.span = span;
        if (req.name.empty()) {
            result.diagnostics.push_back({Severity::Error, "missing requirement name", span});
            continue;
        }
        bool ok = true;
        for (const auto &part : splitTop(req.text, "&&")) {
            std::string error;
            auto clause = parseClause(part, error);
            if (!clause) {
                SourceSpan at = span;
                std::size_t offset = line.find(part);
                if (offset != std::string::npos)
                    at.column = static_cast<std::uint32_t>(offset + 1);
                result.diagnostics.push_back({Severity::Error, error, at});
                ok = false;
                break;
            }
            req.clauses.push_back(std::move(*clause));
        }
        if (ok)
            result.requirements.push_back(std::move(req));
    }
    return result;
}

std::vector<Ticks> labelClocks(const std::vector<Label> &labels) {
    std::vector<Ticks> out;
    out.reserve(labels.size());
    Ticks clock = 0;
    for (const auto &l : labels) {
        out.push_back(clock);
        if (isTick(l))
            ++clock;
    }
    return out;
}

namespace {

PathCheck checkClause(const Clause &c, const PathView &v, const ExecutionPath &path) {
    switch (c.form) {
    case ReqForm::DeadlockFree:
        if (path.terminal == Terminal::Deadlock)
            return "deadlock at clock " + std::to_string(path.finalClock);
        return std::nullopt;
    case ReqForm::AllPathsEventBy: {
        auto i = firstMatch(v, c.first);
        if (!i)
            return "no matching event up to clock " + std::to_string(path.finalClock);
        if (v.clocks[*i] > c.bound)
            return "first match " + at(v, *i) + " is later than " + std::to_string(c.bound);
        return std::nullopt;
    }
    case ReqForm::ExistsEvent: {
        auto i = firstMatch(v, c.first);
        if (i)
            return std::nullopt; // witness found; reason filled by caller
        return "no matching event";
    }
    case ReqForm::NeverEvent: {
        auto i = firstMatch(v, c.first);
        if (i)
            return "matching event " + at(v, *i);
        return std::nullopt;
    }
    case ReqForm::HandlerCoverage:
        for (std::size_t i = 0; i < v.labels.size(); ++i)
            if (const auto *f = std::get_if<FaultLabel>(&v.labels[i]))
                if (c.instance == "*" || c.instance == f->def)
                    return "unhandled " + at(v, i);
        return std::nullopt;
    case ReqForm::Recurs: {
        Ticks last = 0;
        bool any = false;
        for (std::size_t i = 0; i < v.labels.size(); ++i) {
            if (!c.first.matches(v.labels[i]))
                continue;
            Ticks gap = v.clocks[i] - last;
            if (gap > c.bound)
                return "gap of " + std::to_string(gap) + " before " + at(v, i);
            last = v.clocks[i];
            any = true;
        }
        if (path.finalClock - last > c.bound)
            return std::string(any ? "no recurrence after clock " : "no occurrence from clock ") +
                   std::to_string(last) + " to the end at " + std::to_string(path.finalClock);
        return std::nullopt;
    }
    case ReqForm::NeverAfter: {
        auto t = firstMatch(v, c.first);
        if (!t)
            return std::nullopt;
        if (auto f = firstMatch(v, c.second, *t + 1))
            return at(v, *f) + " after " + at(v, *t);
        return std::nullopt;
    }
    case ReqForm::Responds: {
        for (std::size_t i = 0; i < v.labels.size(); ++i) {
            if (!c.first.matches(v.labels[i]))
                continue;
            if (!firstMatch(v, c.second, i + 1))
                return "no response to " + at(v, i);
        }
        return std::nullopt;
    }
    }
    return std::nullopt;
}

bool existential(ReqForm f) { return f == ReqForm::ExistsEvent; }

} // namespace

Verdict check(const Lts &lts, const PathSet &paths, const Requirement &req) {
    Verdict v;
    v.name = req.name;
    v.text = req.text;
    v.boundRelative = lts.truncated() || paths.limitHit;
    v.checkedPaths = paths.paths.size();
    v.holds = true;

    std::vector<PathView> views;
    views.reserve(paths.paths.size());
    for (const auto &p : paths.paths) {
        PathView view{pathLabels(lts, p), {}};
        view.clocks = labelClocks(view.labels);
        views.push_back(std::move(view));
    }

    for (const auto &c : req.clauses) {
        if (existential(c.form)) {
            std::optional<std::size_t> witness;
            for (std::size_t i = 0; i < views.size() && !witness; ++i)
                if (!checkClause(c, views[i], paths.paths[i]))
                    witness = i;
            if (!witness) {
                v.holds = false;
                v.evidence.reset();
                return v;
            }
            if (!v.evidence) {
                auto m = firstMatch(views[*witness], c.first);
                v.evidence = Evidence{Evidence::Witness, *witness, at(views[*witness], *m)};
            }
            continue;
        }
        for (std::size_t i = 0; i < views.size(); ++i) {
            if (auto reason = checkClause(c, views[i], paths.paths[i])) {
                v.holds = false;
                v.evidence = Evidence{Evidence::Counterexample, i, *reason};
                return v;
            }
        }
    }
    return v;
}

std::size_t SuiteResult::held() const {
    return static_cast<std::size_t>(
        std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict &v) { return v.holds; }));
}

SuiteResult checkSuite(const Lts &lts, const PathSet &paths, const std::vector<Requirement> &reqs) {
    SuiteResult out;
    for (const auto &r : reqs)
        out.verdicts.push_back(check(lts, paths, r));
    return out;
}

std::string suiteToText(const Lts &lts, const PathSet &paths, const SuiteResult &result) {
    std::ostringstream os;
    std::size_t width = 4;
    for (const auto &v : result.verdicts)
        width = std::max(width, v.name.size());
    for (const auto &v : result.verdicts) {
        os << v.name << std::string(width - v.name.size() + 2, ' ') << (v.holds ? "HOLDS " : "FAILS ")
           << v.text << '\n';
        if (v.evidence) {
            os << std::string(width + 2, ' ')
               << (v.evidence->kind == Evidence::Witness ? "witness" : "counterexample") << ": path "
               << v.evidence->path << ", " << v.evidence->reason << '\n';
        }
    }
    os << result.held() << '/' << result.verdicts.size() << " hold";
    if (lts.truncated() || paths.limitHit)
        os << " (relative to the exploration bounds)";
    os << '\n';
    return os.str();
}

nlohmann::json suiteToJson(const Lts &lts, const PathSet &paths, const SuiteResult &result) {
    nlohmann::json reqs = nlohmann::json::array();
    for (const auto &v : result.verdicts) {
        nlohmann::json j = {{"name", v.name},
                            {"requirement", v.text},
                            {"holds", v.holds},
                            {"boundRelative", v.boundRelative},
                            {"checkedPaths", v.checkedPaths}};
        if (v.evidence) {
            nlohmann::json labels = nlohmann::json::array();
            for (const auto &l : pathLabels(lts, paths.paths[v.evidence->path]))
                labels.push_back(labelToJson(l));
            j["evidence"] = {
                {"kind", v.evidence->kind == Evidence::Witness ? "witness" : "counterexample"},
                {"path", v.evidence->path},
                {"reason", v.evidence->reason},
                {"labels", labels}};
        }
        reqs.push_back(std::move(j));
    }
    return {{"requirements", reqs},
            {"summary", {{"hold", result.held()}, {"total", result.verdicts.size()}}}};
}

} // namespace dtcal
