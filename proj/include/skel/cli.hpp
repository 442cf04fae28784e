#pragma once

#include <string>
#include <vector>

namespace skel {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;

/// Runs `skel <gen-data|train|simulate|eval|certify|compare> [--config FILE]
/// [flags]`. args[0] is the program name. Errors are reported on stderr
/// and mapped to exit codes; nothing escapes as an exception.
int run_cli(const std::vector<std::string>& args);

}  // namespace skel
