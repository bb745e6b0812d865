#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sttrack/harness/checks.hpp"
#include "sttrack/numerics/gradcheck.hpp"
#include "sttrack/numerics/ops.hpp"
#include "sttrack/numerics/params.hpp"
#include "sttrack/numerics/random.hpp"

using namespace sttrack;
using num::Tensor;

TEST(Params, UniformDrawDependsOnNameNotOrder) {
  num::ParameterSet a(9), b(9);
  a.uniform("x", {4}, 4);
  a.uniform("y", {4}, 4);
  b.uniform("y", {4}, 4);
  b.uniform("x", {4}, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.at("x")[i], b.at("x")[i]);
    EXPECT_LE(std::abs(a.at("x")[i]), 0.5);
  }
  EXPECT_NE(a.at("x")[0], a.at("y")[0]);
}

TEST(Params, CheckpointRoundTripIsBitExact) {
  num::ParameterSet p(3);
  p.uniform("layer.w", {2, 3, 4}, 6);
  p.constant("layer.b", {4}, -2.19);
  std::stringstream ss;
  num::write_checkpoint(ss, p);
  auto q = num::read_checkpoint(ss);
  ASSERT_EQ(q.size(), 2u);
  for (const auto& [name, t] : p) {
    EXPECT_EQ(q.at(name).shape(), t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(q.at(name)[i], t[i]);
  }
}

TEST(Params, CheckpointRejectsBadMagic) {
  std::stringstream ss("NOPE0000");
  EXPECT_THROW(num::read_checkpoint(ss), FormatError);
}

TEST(Params, DeepCopyIsIndependent) {
  num::ParameterSet p(1);
  p.constant("a", {2}, 1.0);
  auto q = p.deep_copy();
  q.at("a").mutable_data()[0] = 5.0;
  EXPECT_EQ(p.at("a")[0], 1.0);
}

TEST(Random, SameSeedSameStream) {
  num::Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
  EXPECT_NE(num::derive_seed(1, "a"), num::derive_seed(1, "b"));
  EXPECT_EQ(num::derive_seed(1, "a"), num::derive_seed(1, "a"));
}

TEST(Random, NormalMomentsAreSane) {
  num::Rng r(7);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(GradCheck, AllOpCasesPass) {
  num::GradCheckOptions opt;
  for (auto& c : harness::op_grad_cases()) {
    auto report = num::finite_diff_check(c.fn, c.params, opt);
    EXPECT_TRUE(report.passed()) << c.name << "\n" << num::format_report(report);
    EXPECT_GT(report.checked(), 0u) << c.name;
  }
}

TEST(GradCheck, DetectsWrongBackward) {
  // y = x^2 with a backward that reports x instead of 2x.
  num::ParameterSet p(0);
  p.insert("x", Tensor::from({3}, {0.5, -1.2, 2.0}));
  num::ScalarFn f = [](const num::ParameterSet& ps) {
    const Tensor& x = ps.at("x");
    std::vector<double> v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] * x[i];
    auto sq = Tensor::make_result("bad_square", x.shape(), std::move(v), {x}, [](num::detail::Node& self) {
      auto& in = *self.inputs[0];
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * in.data[i];
    });
    return num::sum(sq);
  };
  auto report = num::finite_diff_check(f, p);
  EXPECT_FALSE(report.passed());
  EXPECT_NEAR(report.max_rel_error(), 0.5, 1e-6);
}

Tensor plus_100(const Tensor& s) { return num::add(s, Tensor::from(s.shape(), {100.0})); }

TEST(GradCheck, FloorScalesWithLossMagnitude) {
  // Round-off in f = 100 + 1e-7 * y swamps a 1e-6 absolute floor.
  num::ParameterSet p(0);
  p.insert("y", Tensor::from({2}, {0.3, -0.7}));
  num::ScalarFn f = [](const num::ParameterSet& ps) {
    return plus_100(num::scale(num::sum(ps.at("y")), 1e-7));
  };
  auto report = num::finite_diff_check(f, p);
  EXPECT_TRUE(report.passed()) << num::format_report(report);

  // A wrong gradient of the same size as the loss still fails.
  p.insert("x", Tensor::from({3}, {0.5, -1.2, 2.0}));
  num::ScalarFn g = [](const num::ParameterSet& ps) {
    const Tensor& x = ps.at("x");
    std::vector<double> v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] * x[i];
    auto sq = Tensor::make_result("bad_square", x.shape(), std::move(v), {x}, [](num::detail::Node& self) {
      auto& in = *self.inputs[0];
      auto& gr = in.ensure_grad();
      for (std::size_t i = 0; i < gr.size(); ++i) gr[i] += self.grad[i] * in.data[i];
    });
    return plus_100(num::sum(sq));
  };
  report = num::finite_diff_check(g, p);
  EXPECT_FALSE(report.passed());
  EXPECT_NEAR(report.max_rel_error(), 0.5, 1e-6);
}
