#pragma once

#include <iosfwd>

namespace stpc::cli {

// Exit codes returned by run().
inline constexpr int kOk = 0;
inline constexpr int kRuntimeFailure = 1;
inline constexpr int kInvalidConfig = 2;

// Parses argv (argv[0] is the program name) and runs one subcommand.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stpc::cli
