#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace dtcal {

struct SourceSpan {
    std::string file;
    std::uint32_t line = 1;
    std::uint32_t column = 1;
    std::uint32_t length = 0;

    bool operator==(const SourceSpan &) const = default;
};

enum class Severity { Error, Warning };

struct Diagnostic {
    Severity severity = Severity::Error;
    std::string message;
    SourceSpan span;
};

using Diagnostics = std::vector<Diagnostic>;

inline bool hasErrors(const Diagnostics &diags) {
    for (const auto &d : diags)
        if (d.severity == Severity::Error)
            return true;
    return false;
}

// file:line:col: error: message
inline std::ostream &operator<<(std::ostream &os, const Diagnostic &d) {
    os << (d.span.file.empty() ? "<input>" : d.span.file) << ':' << d.span.line << ':'
       << d.span.column << ": " << (d.severity == Severity::Error ? "error" : "warning") << ": "
       << d.message;
    return os;
}

} // namespace dtcal
