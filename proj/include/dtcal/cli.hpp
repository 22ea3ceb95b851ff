#pragma once

// Command-line front end: check, paths, simulate, verify, render.
//
// Exit codes: 0 success (verify: all requirements hold), 1 some requirement
// fails, 2 usage, I/O, parse or validation errors. Artifacts go to `out`,
// diagnostics to `err`.
//
// Settings come from flags, then `dtcal.toml` in the working directory
// (`key = value` lines: max-clock, max-states, jobs, seed), then defaults.

#include <ostream>
#include <string>
#include <vector>

namespace dtcal::cli {

/// args excludes the program name.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace dtcal::cli
