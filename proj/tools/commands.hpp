#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace docspot::cli {

/// Parses `args` (without the program name) and runs one subcommand.
/// Returns the process exit status; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace docspot::cli
