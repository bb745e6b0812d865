#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sttrack::num {

// Seeded generator with platform-independent draws. std::mt19937_64 is fully
// specified; the distribution code below is ours so values match everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n ? engine_() % n : 0; }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
// Stable seed for a named stream under a global seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

}  // namespace sttrack::num
