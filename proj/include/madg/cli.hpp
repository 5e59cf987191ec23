#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace madg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitViolation = 3;

/// Flat `key = value` lines; `#` starts a comment. Keys are long flag names without dashes.
std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in);

/// Runs one subcommand (args exclude the program name) and returns its exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace madg
