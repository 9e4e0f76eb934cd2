#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace unbflow {

/// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUnresolved = 2;

/// Sets the spdlog level from UNBFLOW_LOG (trace, debug, info, warn, error,
/// off). Unknown values fall back to warn.
void init_logging();

/// Parses `args` (without the program name) and runs the subcommand. Reports
/// go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unbflow
