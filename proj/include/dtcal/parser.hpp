#pragma once

// Text front end for `.dtc` specifications plus DOT exports of the
// in-the-large (containment/channel) and in-the-small (action flow) views.

#include "dtcal/ast.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace dtcal {

struct ParseResult {
    std::optional<SpecFile> spec;
    Diagnostics diagnostics;

    bool ok() const { return spec.has_value() && !hasErrors(diagnostics); }
};

/// Parses a whole specification. The first definition becomes the root.
ParseResult parse(std::string_view text, std::string file = {});

/// Renders a specification back to source; parse(render(s)) is structurally s.
std::string render(const SpecFile &spec);
std::string renderTerm(const TermPtr &term);

/// System view: one cluster per container in the root's static nesting and an
/// undirected edge per channel shared by a sender and a receiver.
std::string exportItl(const SpecFile &spec);

/// Process view of one definition. Throws std::invalid_argument for an unknown name.
std::string exportIts(const SpecFile &spec, std::string_view defName);

} // namespace dtcal
