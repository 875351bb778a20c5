#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gfmmr::cli {

/// Parses argv and runs one subcommand. Returns the process exit code:
/// 0 success, 1 usage, 2 data validation, 3 numerical failure, 4 non-convergence.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gfmmr::cli
