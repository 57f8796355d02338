#pragma once

#include <ostream>

namespace iopcal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

/// Parses arguments and runs one subcommand. Returns the process exit code:
/// 0 on success, 2 for usage or validation errors, 3 for numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace iopcal::cli
