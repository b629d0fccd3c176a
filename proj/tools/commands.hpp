#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace skgan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Bad flag combinations found after parsing; reported with exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Parses `args` (without the program name) and runs the subcommand.
// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace skgan::cli
