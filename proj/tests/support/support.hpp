#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "sttrack/numerics/tensor.hpp"

namespace testing_support {

inline std::vector<double> uniform_values(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline sttrack::num::Tensor uniform_tensor(std::mt19937_64& rng, sttrack::num::Shape shape, double lo = -1.0,
                                           double hi = 1.0) {
  auto v = uniform_values(rng, sttrack::num::numel_of(shape), lo, hi);
  return sttrack::num::Tensor::from(std::move(shape), std::move(v));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

}  // namespace testing_support
