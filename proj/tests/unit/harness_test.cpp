#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "sttrack/harness/checks.hpp"
#include "sttrack/harness/config.hpp"
#include "sttrack/harness/scene.hpp"
#include "sttrack/harness/train.hpp"

using namespace sttrack;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("sttrack_test_" + name + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Scene, GenerationIsDeterministic) {
  harness::SceneSpec spec;
  spec.frames = 4;
  auto a = harness::generate_sequence(spec), b = harness::generate_sequence(spec);
  EXPECT_EQ(a.boxes, b.boxes);
  EXPECT_EQ(a.clouds, b.clouds);
  spec.seed = 2;
  EXPECT_NE(harness::generate_sequence(spec).clouds, a.clouds);
}

TEST(Scene, ConstantVelocityFollowsClosedForm) {
  harness::SceneSpec spec;
  spec.frames = 20;
  spec.seed = 9;
  auto seq = harness::generate_sequence(spec);
  const auto& b0 = seq.boxes[0];
  EXPECT_EQ(b0.x, 0.0);
  EXPECT_EQ(b0.z, spec.ground_z + spec.box_h / 2);
  for (std::size_t k = 0; k < 20; ++k) {
    EXPECT_NEAR(seq.boxes[k].x, 0.2 * k * std::cos(b0.theta), 1e-12);
    EXPECT_NEAR(seq.boxes[k].y, 0.2 * k * std::sin(b0.theta), 1e-12);
    EXPECT_EQ(seq.boxes[k].theta, b0.theta);
  }
  EXPECT_EQ(seq.clouds[3].size(), spec.target_points + spec.clutter_points);
}

TEST(Scene, ConstantTurnRotatesHeading) {
  harness::SceneSpec spec;
  spec.motion = harness::Motion::kConstantTurn;
  spec.yaw_rate = 0.1;
  spec.frames = 5;
  auto seq = harness::generate_sequence(spec);
  EXPECT_NEAR(geom::normalize_angle(seq.boxes[4].theta - seq.boxes[0].theta), 0.4, 1e-12);
  for (std::size_t k = 1; k < 5; ++k)
    EXPECT_NEAR(geom::bev_center_distance(seq.boxes[k], seq.boxes[k - 1]), 0.2, 1e-12);
}

TEST(Scene, SurfacePointsLieOnTheBox) {
  num::Rng rng(4);
  const geom::Box3D box{1, 2, 0.5, 2, 4, 1.6, 0.7};
  auto pts = harness::sample_box_surface(box, 500, 0.0, rng);
  ASSERT_EQ(pts.size(), 500u);
  for (const auto& p : pts) {
    const double dx = p.x - box.x, dy = p.y - box.y;
    const double u = std::cos(box.theta) * dx + std::sin(box.theta) * dy;
    const double v = -std::sin(box.theta) * dx + std::cos(box.theta) * dy;
    const double w = p.z - box.z;
    const double face = std::max({std::abs(u) / 2.0, std::abs(v) / 1.0, std::abs(w) / 0.8});
    EXPECT_NEAR(face, 1.0, 1e-5);  // float rounding
  }
}

TEST(Scene, SubsampleKeepsEveryStrideFrame) {
  harness::SceneSpec spec;
  spec.frames = 7;
  auto seq = harness::generate_sequence(spec);
  auto sub = harness::subsample_sequence(seq, 3);
  ASSERT_EQ(sub.size(), 3u);
  EXPECT_EQ(sub.boxes[2], seq.boxes[6]);
  EXPECT_EQ(sub.clouds[1], seq.clouds[3]);
  EXPECT_THROW(harness::subsample_sequence(seq, 0), ConfigError);
}

TEST(Scene, SaveLoadIsBitExact) {
  harness::SceneSpec spec;
  spec.frames = 3;
  spec.distractors = 2;
  auto seq = harness::generate_sequence(spec);
  auto dir = temp_dir("seq");
  harness::save_sequence(dir, seq);
  auto back = harness::load_sequence(dir);
  EXPECT_EQ(back.boxes, seq.boxes);
  EXPECT_EQ(back.clouds, seq.clouds);
  fs::remove_all(dir);
  EXPECT_THROW(harness::load_sequence(dir), FormatError);
}

TEST(Config, ParsesKeysAndRejectsUnknown) {
  std::istringstream in("# comment\ngrid.range = 4.8\nstlm.variant = dense  # trailing\npattern = 0,2\n");
  auto cfg = harness::parse_config(in);
  cfg.finalize();
  EXPECT_EQ(cfg.pipeline.grid.W, 8u);
  EXPECT_EQ(cfg.pipeline.stlm.variant, stlm::Variant::kDense);
  EXPECT_EQ(cfg.pipeline.pattern.str(), "0,2");

  std::istringstream bad("grid.rnage = 4\n");
  EXPECT_THROW(harness::parse_config(bad), ConfigError);
  std::istringstream badval("train.steps = many\n");
  EXPECT_THROW(harness::parse_config(badval), ConfigError);
  harness::RunConfig c;
  c.grid.stride = 3;
  EXPECT_THROW(c.finalize(), ConfigError);
}

TEST(Config, WriteParseRoundTrip) {
  harness::RunConfig cfg;
  harness::apply_setting(cfg, "backbone.channels", "16");
  harness::apply_setting(cfg, "head.assignment", "gaussian");
  harness::apply_setting(cfg, "scene.motion", "constant_turn");
  harness::apply_setting(cfg, "train.lr", "0.0125");
  std::stringstream ss;
  harness::write_config(ss, cfg);
  auto back = harness::parse_config(ss);
  EXPECT_EQ(back.pipeline.stlm.c1, 16u);
  EXPECT_EQ(back.pipeline.head.in_channels, 16u);
  EXPECT_EQ(back.pipeline.head.assignment, head::Assignment::kGaussian);
  EXPECT_EQ(back.scene.motion, harness::Motion::kConstantTurn);
  EXPECT_EQ(back.train.lr, 0.0125);
  std::stringstream again;
  harness::write_config(again, back);
  EXPECT_EQ(again.str(), ss.str());
  for (const auto& key : harness::config_keys()) EXPECT_NE(ss.str().find(key + " ="), std::string::npos) << key;
}

TEST(Train, CosineScheduleEndpoints) {
  harness::TrainConfig t;
  t.steps = 101;
  t.lr = 0.1;
  t.lr_final = 0.01;
  EXPECT_DOUBLE_EQ(harness::learning_rate(t, 0), 0.1);
  EXPECT_NEAR(harness::learning_rate(t, 100), 0.001, 1e-15);
  EXPECT_NEAR(harness::learning_rate(t, 50), 0.5 * (0.1 + 0.001), 1e-15);
  t.lr_final = 1.0;
  EXPECT_DOUBLE_EQ(harness::learning_rate(t, 70), 0.1);
}

TEST(Train, ZeroStepsReturnsInitialParameters) {
  auto cfg = harness::reduced_config();
  cfg.train.steps = 0;
  auto r = harness::train_toy(cfg, cfg.scene);
  auto init = harness::initial_params(cfg);
  EXPECT_TRUE(r.losses.empty());
  for (const auto& [name, t] : init)
    for (std::size_t i = 0; i < t.numel(); ++i) ASSERT_EQ(r.params.at(name)[i], t[i]) << name;
}

TEST(Train, DeterministicAndLossDecreases) {
  auto cfg = harness::reduced_config();
  cfg.train.steps = 60;
  cfg.train.lr = 0.02;
  cfg.train.batch = 2;
  auto a = harness::train_toy(cfg, cfg.scene);
  auto b = harness::train_toy(cfg, cfg.scene);
  EXPECT_EQ(a.losses, b.losses);
  ASSERT_EQ(a.losses.size(), 60u);
  double first = 0, last = 0;
  for (int k = 0; k < 10; ++k) {
    first += a.losses[k];
    last += a.losses[50 + k];
  }
  EXPECT_LT(last, first);
}

TEST(Train, SampleLossFollowsHistoryNoise) {
  auto cfg = harness::reduced_config();
  auto params = harness::initial_params(cfg);
  auto spec = cfg.scene;
  spec.frames = 5;
  auto seq = harness::generate_sequence(spec);
  auto a = harness::sample_loss(seq, 3, {}, params, cfg.pipeline);
  const std::vector<harness::BoxNoise> shifted{{0.1, -0.2, 0.05, 0.0}};
  auto b = harness::sample_loss(seq, 3, shifted, params, cfg.pipeline);
  EXPECT_TRUE(std::isfinite(a.total.item()));
  EXPECT_NE(a.offset, b.offset);
  EXPECT_NE(a.height, b.height);
  // Heading noise on an older box only moves its mask: the targets and the
  // reference stay put, so the loss changes but stays finite.
  const std::vector<harness::BoxNoise> older{{}, {0.0, 0.0, 0.0, 0.4}};
  auto c = harness::sample_loss(seq, 3, older, params, cfg.pipeline);
  EXPECT_TRUE(std::isfinite(c.total.item()));
  EXPECT_NE(c.total.item(), a.total.item());
  // Noise past the deepest age is never read.
  std::vector<harness::BoxNoise> deep(cfg.pipeline.pattern.max_age() + 1);
  deep.back().x = 5.0;
  EXPECT_EQ(harness::sample_loss(seq, 3, deep, params, cfg.pipeline).total.item(), a.total.item());
}
