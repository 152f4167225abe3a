#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace efc {

/// Exit codes of the command line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the tool on `args` (without the program name). Reports go to `out`,
/// diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Reads `key = value` lines ('#' starts a comment) and appends
/// `--key=value` for every key whose flag is not already in `args`.
/// Underscores in keys become dashes.
std::vector<std::string> merge_config(const std::vector<std::string>& args, const std::string& config_path);

}  // namespace efc
