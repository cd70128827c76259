#pragma once

#include <ostream>

namespace ams {

/// Exit codes of the `ams` tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitError = 1,
  kExitConfig = 2,
  kExitNonTermination = 3,
  kExitAssertion = 4,
};

/// Entry point of the `ams` tool: parses argv, runs the subcommand, writes
/// artifacts and returns the exit code.  Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ams
