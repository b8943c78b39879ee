#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mfos::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 1;
inline constexpr int kDiverged = 2;
inline constexpr int kRuntimeError = 3;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mfos::cli
