#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace coach::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs `coach <command> [flags]`. `args` excludes the program name.
/// Returns the process exit code; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace coach::cli
