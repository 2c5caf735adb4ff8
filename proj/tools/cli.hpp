#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tvae::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kDataError = 1, kAgentError = 2, kInternalError = 3 };

/// Runs the harness command line. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tvae::cli
