#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace summit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // bench verdict failed, or an unexpected error
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Runs one command line (args[0] is the program name) and returns the exit
/// code. Human-readable progress goes to out, diagnostics to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace summit
