#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sttrack/numerics/params.hpp"

namespace sttrack::num {

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, abs_floor * max(1, |f|)).
  // Round-off in f(p +/- eps) grows with |f|, hence the scaled floor.
  double abs_floor = 1e-6;
  // 0 checks every element; otherwise a seeded sample of this many per tensor.
  std::size_t max_elements = 0;
  std::uint64_t sample_seed = 7;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Elements whose +/- epsilon stencil crossed a kink (ReLU, max, floor, |x|):
  // central differences are not a valid oracle there.
  std::size_t skipped = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed() const;
  double max_rel_error() const;
  std::size_t checked() const;
  std::size_t skipped() const;
};

using ScalarFn = std::function<Tensor(const ParameterSet&)>;

// Compares backward() gradients of f against central differences.
GradCheckReport finite_diff_check(const ScalarFn& f, ParameterSet& params, const GradCheckOptions& opt = {});

std::string format_report(const GradCheckReport& report);

}  // namespace sttrack::num
