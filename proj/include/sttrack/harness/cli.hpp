#pragma once

#include <iosfwd>

namespace sttrack::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Subcommands: synth, track, eval, train-toy, gradcheck, goldens.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sttrack::harness
