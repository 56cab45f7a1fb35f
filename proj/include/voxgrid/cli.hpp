#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace voxgrid::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitNumerical = 3;

/// Runs the command line `args` (without the program name). Progress goes to
/// `out`, diagnostics to `err`; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace voxgrid::cli
