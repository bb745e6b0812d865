#include "sttrack/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sttrack/numerics/random.hpp"

namespace sttrack::num {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::size_t GradCheckReport::checked() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.checked;
  return n;
}

std::size_t GradCheckReport::skipped() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.skipped;
  return n;
}

GradCheckReport finite_diff_check(const ScalarFn& f, ParameterSet& params, const GradCheckOptions& opt) {
  if (!(opt.epsilon > 0.0)) throw ContractError("finite_diff_check: epsilon must be > 0");

  BranchTracker tracker;
  params.zero_grad();
  const Tensor loss = f(params);
  if (loss.numel() != 1) throw ContractError("finite_diff_check: f must return a scalar");
  require_finite(loss.data(), "finite_diff_check");
  const std::uint64_t base_signature = tracker.signature();
  const double floor = opt.abs_floor * std::max(1.0, std::abs(loss.item()));
  backward(loss);

  auto probe = [&](double& slot, double value, std::uint64_t& signature) {
    slot = value;
    tracker.reset();
    NoGradGuard no_grad;
    const double v = f(params).item();
    signature = tracker.signature();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: f is non-finite");
    return v;
  };

  GradCheckReport report;
  for (auto& [name, tensor] : params) {
    GradCheckEntry entry;
    entry.name = name;
    const std::vector<double> analytic(tensor.grad().begin(), tensor.grad().end());
    std::vector<std::size_t> indices(tensor.numel());
    std::iota(indices.begin(), indices.end(), 0);
    if (opt.max_elements && indices.size() > opt.max_elements) {
      Rng rng(derive_seed(opt.sample_seed, name));
      for (std::size_t i = 0; i < opt.max_elements; ++i) {
        std::swap(indices[i], indices[i + rng.below(indices.size() - i)]);
      }
      indices.resize(opt.max_elements);
      std::sort(indices.begin(), indices.end());
    }
    auto data = tensor.mutable_data();
    for (std::size_t idx : indices) {
      const double original = data[idx];
      std::uint64_t sig_plus = 0, sig_minus = 0;
      const double up = probe(data[idx], original + opt.epsilon, sig_plus);
      const double down = probe(data[idx], original - opt.epsilon, sig_minus);
      data[idx] = original;
      if (sig_plus != base_signature || sig_minus != base_signature) {
        ++entry.skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * opt.epsilon);
      const double a = analytic[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - numeric) / denom);
      ++entry.checked;
    }
    entry.passed = entry.max_rel_error < opt.tolerance;
    report.entries.push_back(entry);
  }
  return report;
}

std::string format_report(const GradCheckReport& report) {
  std::ostringstream os;
  for (const auto& e : report.entries) {
    os << (e.passed ? "  ok   " : "  FAIL ") << e.name << "  max_rel=" << e.max_rel_error << "  checked=" << e.checked;
    if (e.skipped) os << "  skipped(kink)=" << e.skipped;
    os << '\n';
  }
  return os.str();
}

}  // namespace sttrack::num
