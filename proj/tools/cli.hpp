#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace roadscan::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kInputError = 2,
  kBudgetExceeded = 3,
};

/// Entry point behind the `roadscan` executable. `args` excludes the program
/// name. Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace roadscan::cli
