#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "support.hpp"
#include "sttrack/head/head.hpp"

using namespace sttrack;
using geom::Box3D;
using num::Tensor;

namespace {

geom::GridConfig grid16() { return geom::GridConfig::centered(9.6, 0.15, 4, -3, 3); }

Box3D random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-3.5, 3.5), z(-1, 1), ang(-3.1, 3.1), ext(0.4, 4.0);
  return {pos(rng), pos(rng), z(rng), ext(rng), ext(rng), ext(rng), ang(rng)};
}

}  // namespace

TEST(Head, EncodeDecodeRoundTrip) {
  const auto grid = grid16();
  std::mt19937_64 rng(17);
  for (int k = 0; k < 100; ++k) {
    const Box3D gt = random_box(rng);
    const auto size = head::BoxSize::of(gt);
    for (auto a : {head::Assignment::kForeground, head::Assignment::kGaussian}) {
      auto t = head::assign_targets(gt, grid, size, a);
      ASSERT_GT(t.positives, 0u);
      auto p = head::decode(t.heatmap, t.offset, t.height, t.orientation, grid, size);
      EXPECT_NEAR(p.box.x, gt.x, 1e-9) << k;
      EXPECT_NEAR(p.box.y, gt.y, 1e-9) << k;
      EXPECT_NEAR(p.box.z, gt.z, 1e-9) << k;
      EXPECT_NEAR(geom::normalize_angle(p.box.theta - gt.theta), 0.0, 1e-9) << k;
      EXPECT_EQ(p.box.w, gt.w);
      EXPECT_EQ(p.box.l, gt.l);
    }
  }
}

TEST(Head, CellCentreGivesHalfOffsets) {
  const auto grid = grid16();
  const Box3D gt{grid.cell_center_x(5), grid.cell_center_y(9), 0, 2, 4, 1.6, 0.2};
  auto t = head::assign_targets(gt, grid, head::BoxSize::of(gt));
  const std::size_t k = 9 * 16 + 5;
  EXPECT_EQ(t.heatmap[k], 1.0);
  EXPECT_NEAR(t.offset[2 * k], 0.5, 1e-12);
  EXPECT_NEAR(t.offset[2 * k + 1], 0.5, 1e-12);
}

TEST(Head, ForegroundHeatmapEqualsMask) {
  const auto grid = grid16();
  const Box3D gt{0.4, -1.1, 0, 2, 4, 1.6, 0.7};
  auto t = head::assign_targets(gt, grid, head::BoxSize::of(gt));
  auto m = geom::rasterize_box_mask(gt, grid);
  for (std::size_t k = 0; k < 256; ++k) {
    EXPECT_EQ(t.heatmap[k], double(m.values[k]));
    EXPECT_EQ(t.valid_mask[k], double(m.values[k]));
  }
  EXPECT_EQ(t.positives, m.count());
  // Every positive cell points at the same centre.
  for (std::size_t k = 0; k < 256; ++k) {
    if (!m.values[k]) continue;
    EXPECT_NEAR((double(k % 16) + t.offset[2 * k]) * 0.6 - 4.8, gt.x, 1e-12);
    EXPECT_NEAR((double(k / 16) + t.offset[2 * k + 1]) * 0.6 - 4.8, gt.y, 1e-12);
  }
}

TEST(Head, TinyBoxFallsBackToCentreCell) {
  const auto grid = grid16();
  const Box3D gt{0.05, 0.05, 0, 0.1, 0.1, 0.1, 0};
  auto t = head::assign_targets(gt, grid, head::BoxSize::of(gt));
  EXPECT_EQ(t.positives, 1u);
  EXPECT_EQ(t.heatmap[8 * 16 + 8], 1.0);
  const Box3D away{30, 30, 0, 0.1, 0.1, 0.1, 0};
  EXPECT_TRUE(head::assign_targets(away, grid, head::BoxSize::of(away)).out_of_range);
}

TEST(Head, GaussianHasFewerPositivesThanForeground) {
  const auto grid = grid16();
  std::mt19937_64 rng(3);
  for (int k = 0; k < 50; ++k) {
    const Box3D gt = random_box(rng);
    auto fg = head::assign_targets(gt, grid, head::BoxSize::of(gt), head::Assignment::kForeground);
    auto ga = head::assign_targets(gt, grid, head::BoxSize::of(gt), head::Assignment::kGaussian);
    EXPECT_LE(ga.positives, fg.positives);
    std::size_t ones = 0;
    for (double v : ga.heatmap.data()) ones += v == 1.0;
    EXPECT_EQ(ones, 1u);
  }
}

TEST(Head, DecodeTieBreaksToLowestIndex) {
  const auto grid = grid16();
  auto heat = Tensor::zeros({16, 16, 1});
  heat.mutable_data()[40] = 0.9;
  heat.mutable_data()[200] = 0.9;
  auto p = head::decode(heat, Tensor::zeros({16, 16, 2}), Tensor::zeros({16, 16, 1}), Tensor::zeros({16, 16, 2}), grid,
                        {2, 4, 1.6});
  EXPECT_EQ(p.i, 2u);
  EXPECT_EQ(p.j, 8u);
  EXPECT_DOUBLE_EQ(p.box.x, 8 * 0.6 - 4.8);
}

TEST(Head, DecodeInvariantToMonotoneHeatmapTransform) {
  const auto grid = grid16();
  std::mt19937_64 rng(4);
  auto heat = testing_support::uniform_tensor(rng, {16, 16, 1}, 0, 1);
  auto off = testing_support::uniform_tensor(rng, {16, 16, 2}, 0, 1);
  auto hgt = testing_support::uniform_tensor(rng, {16, 16, 1});
  auto ori = testing_support::uniform_tensor(rng, {16, 16, 2});
  auto a = head::decode(heat, off, hgt, ori, grid, {2, 4, 1.6});
  auto b = head::decode(num::sigmoid(num::scale(heat, 3.0)), off, hgt, ori, grid, {2, 4, 1.6});
  EXPECT_EQ(a.box, b.box);
}

TEST(Head, OrientationScaleInvariant) {
  const auto grid = grid16();
  auto heat = Tensor::zeros({16, 16, 1});
  heat.mutable_data()[0] = 1.0;
  auto ori = Tensor::zeros({16, 16, 2});
  ori.mutable_data()[0] = 0.3 * 5;
  ori.mutable_data()[1] = -0.4 * 5;
  auto p = head::decode(heat, Tensor::zeros({16, 16, 2}), Tensor::zeros({16, 16, 1}), ori, grid, {1, 1, 1});
  EXPECT_NEAR(p.box.theta, std::atan2(0.3, -0.4), 1e-15);
}

TEST(Head, ForwardShapesZeroInputAndBranchIndependence) {
  head::HeadConfig cfg;
  cfg.in_channels = 4;
  cfg.hidden = 3;
  num::ParameterSet p(2);
  head::init_params(p, cfg);
  auto out = head::head_forward(Tensor::zeros({6, 6, 4}), p);
  EXPECT_EQ(out.offset.shape(), (num::Shape{6, 6, 2}));
  EXPECT_EQ(out.orientation.shape(), (num::Shape{6, 6, 2}));
  EXPECT_EQ(out.height.shape(), (num::Shape{6, 6, 1}));

  std::mt19937_64 rng(5);
  auto u = testing_support::uniform_tensor(rng, {6, 6, 4});
  auto before = head::head_forward(u, p);
  for (auto& v : p.at("head.offset.conv.w").mutable_data()) v += 0.25;
  auto after = head::head_forward(u, p);
  EXPECT_EQ(testing_support::max_abs_diff(before.heatmap.data(), after.heatmap.data()), 0.0);
  EXPECT_EQ(testing_support::max_abs_diff(before.height.data(), after.height.data()), 0.0);
  EXPECT_GT(testing_support::max_abs_diff(before.offset.data(), after.offset.data()), 0.0);
}

TEST(Head, ZeroWeightsGiveHalfHeatmap) {
  head::HeadConfig cfg;
  cfg.in_channels = 4;
  cfg.hidden = 3;
  num::ParameterSet p(2);
  head::init_params(p, cfg);
  for (auto& [name, t] : p)
    for (auto& v : t.mutable_data()) v = 0.0;
  std::mt19937_64 rng(6);
  auto out = head::head_forward(testing_support::uniform_tensor(rng, {4, 4, 4}), p);
  for (double v : out.heatmap.data()) EXPECT_EQ(v, 0.5);
}

TEST(Head, LossIsZeroForPerfectRegressionAndMatchesParts) {
  const auto grid = grid16();
  const Box3D gt{0.3, 0.2, -0.1, 2, 4, 1.6, 0.5};
  auto t = head::assign_targets(gt, grid, head::BoxSize::of(gt));
  head::HeadOutput pred{t.heatmap, t.offset, t.height, t.orientation};
  auto l = head::loss(pred, t);
  EXPECT_EQ(l.offset, 0.0);
  EXPECT_EQ(l.height, 0.0);
  EXPECT_EQ(l.orientation, 0.0);
  // Heatmap term alone: clamped probabilities leave a small focal residue.
  EXPECT_NEAR(l.total.item(), l.heatmap, 1e-15);
  EXPECT_LT(l.heatmap, 1e-3);

  head::HeadOutput shifted{pred.heatmap, num::add(t.offset, Tensor::full({16, 16, 2}, 0.1)), t.height, t.orientation};
  auto l2 = head::loss(shifted, t);
  EXPECT_NEAR(l2.offset, 0.2, 1e-12);
  EXPECT_NEAR(l2.total.item(), l2.heatmap + 0.2, 1e-12);
}

TEST(Head, AssignmentNames) {
  EXPECT_EQ(head::parse_assignment("gaussian"), head::Assignment::kGaussian);
  EXPECT_EQ(head::to_string(head::Assignment::kForeground), "foreground");
  EXPECT_THROW(head::parse_assignment("nope"), ConfigError);
}

TEST(Head, HeatmapDumps) {
  auto heat = Tensor::from({2, 2, 1}, {0.0, 0.25, 0.5, 0.125});
  std::stringstream pgm, csv;
  head::write_heatmap_pgm(pgm, heat);
  head::write_heatmap_csv(csv, heat);
  std::string magic;
  int w, h, maxv, a, b, c, d;
  pgm >> magic >> w >> h >> maxv >> a >> b >> c >> d;
  EXPECT_EQ(magic, "P2");
  EXPECT_EQ(w, 2);
  EXPECT_EQ(c, maxv);
  EXPECT_EQ(a, 0);
  EXPECT_EQ(b, 128);  // round(127.5)
  EXPECT_EQ(csv.str(), "0,0.25\n0.5,0.125\n");
}
