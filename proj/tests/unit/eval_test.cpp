#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sttrack/eval/eval.hpp"
#include "sttrack/numerics/errors.hpp"

using namespace sttrack;
using eval::CategoryReport;
using geom::Box3D;

TEST(Eval, SuccessMatchesThresholdOracle) {
  const std::vector<double> ious{0.2, 0.8};
  EXPECT_NEAR(eval::success(ious), oracles::curve_area(ious, 201, true, 1.0), 1e-10);
  // The dense sweep converges to the mean IoU.
  EXPECT_NEAR(oracles::curve_area(ious, 20001, true, 1.0), 50.0, 0.01);
  EXPECT_NEAR(eval::success(ious), 50.0, 0.5);
}

TEST(Eval, EndpointsOfTheSweep) {
  const std::vector<double> perfect{1.0, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(eval::success(perfect), 100.0);
  const std::vector<double> zero_dist{0.0, 0.0};
  EXPECT_DOUBLE_EQ(eval::precision(zero_dist), 100.0);
  const std::vector<double> none{0.0};
  EXPECT_DOUBLE_EQ(eval::success(none), 0.0);
  const std::vector<double> far{5.0};
  EXPECT_DOUBLE_EQ(eval::precision(far), 0.0);
}

TEST(Eval, ConstantMetreErrorGivesHalfPrecision) {
  const std::vector<double> d(37, 1.0);
  EXPECT_NEAR(eval::precision(d), 50.0, 0.5);
  EXPECT_NEAR(eval::precision(d), oracles::curve_area(d, 201, false, 2.0), 1e-10);
}

TEST(Eval, ShiftedBoxesEndToEnd) {
  std::vector<Box3D> gt, unit_pred, long_pred;
  for (int k = 0; k < 10; ++k) {
    gt.push_back({double(k), 0, 0, 1, 2, 1, 0});
    Box3D p = gt.back();
    p.x += 1.0;
    long_pred.push_back(p);
  }
  auto e = eval::evaluate_sequence(long_pred, gt);
  ASSERT_EQ(e.frame_count(), 9u);  // frame 0 skipped
  for (double v : e.ious) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(eval::success(e.ious), oracles::curve_area(e.ious, 201, true, 1.0), 1e-10);
  EXPECT_NEAR(eval::precision(e.dists), 49.75, 1e-9);

  std::vector<Box3D> ugt, upred;
  for (int k = 0; k < 4; ++k) {
    ugt.push_back({0, double(k), 0, 1, 1, 1, 0});
    upred.push_back({1, double(k), 0, 1, 1, 1, 0});
  }
  auto u = eval::evaluate_sequence(upred, ugt);
  EXPECT_DOUBLE_EQ(eval::success(u.ious), 0.0);
  EXPECT_NEAR(eval::precision(u.dists), 50.0, 0.5);
  EXPECT_THROW(eval::evaluate_sequence(upred, gt), DimensionError);
}

TEST(Eval, PaperTableMeans) {
  std::vector<CategoryReport> kitti{{"Car", 6424, 66.5, 79.9},
                                    {"Pedestrian", 6088, 60.4, 89.4},
                                    {"Van", 1248, 50.5, 63.6},
                                    {"Cyclist", 308, 75.3, 93.9}};
  EXPECT_NEAR(eval::weighted_mean(kitti), 62.6, 0.05);
  EXPECT_NEAR(eval::weighted_mean_precision(kitti), 82.9, 0.05);
  std::vector<CategoryReport> nus{{"Car", 64159, 56.11},   {"Ped", 33227, 37.58},   {"Truck", 13587, 54.29},
                                  {"Bic", 2292, 36.23},    {"Bus", 2953, 36.31},    {"Trailer", 3352, 48.13}};
  EXPECT_NEAR(eval::weighted_mean(nus), 49.66, 0.05);
}

TEST(Eval, WeightedMeanRejectsEmptyCategories) {
  std::vector<CategoryReport> none;
  EXPECT_THROW(eval::weighted_mean(none), ContractError);
  std::vector<CategoryReport> empty_cat{{"x", 0, 50, 50}};
  EXPECT_THROW(eval::weighted_mean(empty_cat), ContractError);
  const std::vector<double> nothing;
  EXPECT_THROW(eval::success(nothing), ContractError);
  const std::vector<double> bad{1.5};
  EXPECT_THROW(eval::success(bad), ContractError);
}

TEST(Eval, FuzzMonotoneAndPermutationInvariant) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<double> ious(n), dists(n);
    for (std::size_t i = 0; i < n; ++i) {
      ious[i] = u(rng);
      dists[i] = 3.0 * u(rng);
    }
    const double s = eval::success(ious), p = eval::precision(dists);
    auto better_i = ious, better_d = dists;
    for (std::size_t i = 0; i < n; ++i) {
      better_i[i] = std::min(1.0, ious[i] + u(rng) * (1 - ious[i]));
      better_d[i] = dists[i] * u(rng);
    }
    EXPECT_GE(eval::success(better_i), s);
    EXPECT_GE(eval::precision(better_d), p);
    std::shuffle(ious.begin(), ious.end(), rng);
    std::shuffle(dists.begin(), dists.end(), rng);
    EXPECT_EQ(eval::success(ious), s);
    EXPECT_EQ(eval::precision(dists), p);
  }
}

TEST(Eval, ReportPoolsFramesPerCategory) {
  std::vector<Box3D> gt{{0, 0, 0, 1, 1, 1, 0}, {1, 0, 0, 1, 1, 1, 0}, {2, 0, 0, 1, 1, 1, 0}};
  auto off = gt;
  off[1].x += 0.5;
  off[2].x += 0.5;
  std::vector<eval::SequenceInput> in{{"car", gt, gt}, {"ped", off, gt}, {"car", off, gt}};
  auto r = eval::evaluate_sequences(in);
  ASSERT_EQ(r.categories.size(), 2u);
  EXPECT_EQ(r.categories[0].name, "car");
  EXPECT_EQ(r.categories[0].frames, 4u);
  EXPECT_EQ(r.categories[1].frames, 2u);
  std::vector<double> car_ious{1, 1, 1.0 / 3, 1.0 / 3};
  EXPECT_NEAR(r.categories[0].success, eval::success(car_ious), 1e-12);
  EXPECT_EQ(r.mean.frames, 6u);
  EXPECT_NEAR(r.mean.success, (4 * r.categories[0].success + 2 * r.categories[1].success) / 6, 1e-12);

  std::stringstream csv;
  eval::write_report_csv(csv, r);
  std::string header, row1, row2, mean;
  std::getline(csv, header);
  std::getline(csv, row1);
  std::getline(csv, row2);
  std::getline(csv, mean);
  EXPECT_EQ(header, "category,frames,success_3d,precision_3d,success_bev,precision_bev");
  EXPECT_EQ(row1.substr(0, 6), "car,4,");
  EXPECT_EQ(mean.substr(0, 7), "Mean,6,");
}

TEST(Eval, CurvesCsvHasOneRowPerThreshold) {
  eval::SequenceEval e{{0.5}, {0.5}, {1.0}, {1.0}};
  std::stringstream ss;
  eval::write_curves_csv(ss, e);
  std::size_t lines = 0;
  for (std::string l; std::getline(ss, l);) ++lines;
  EXPECT_EQ(lines, eval::kThresholds + 1);
}
