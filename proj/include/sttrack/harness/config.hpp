#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "sttrack/harness/scene.hpp"
#include "sttrack/tracker/tracker.hpp"

namespace sttrack::harness {

struct GridSpec {
  double range = 9.6;    // square side, metres
  double pillar = 0.15;  // pillar pitch
  std::size_t stride = 4;
  double z_min = -3.0, z_max = 3.0;
};

struct TrainConfig {
  std::size_t steps = 500;
  double lr = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  std::size_t batch = 1;      // samples averaged per step
  std::size_t sequences = 4;  // generated training sequences
  double jitter = 0.3;        // uniform xy perturbation of each history box, metres
  double jitter_z = 0.1;      // same for z
  double jitter_theta = 0.0;  // same for heading, radians
  double lr_final = 1.0;      // cosine decay to lr * lr_final; 1 keeps lr constant
  double clip = 0.0;          // global gradient-norm clip, 0 = off
};

struct RunConfig {
  GridSpec grid;
  track::PipelineConfig pipeline;
  TrainConfig train;
  SceneSpec scene;

  // Derives pipeline.grid from `grid` and validates everything.
  void finalize();
};

// Flat "key = value" lines; '#' starts a comment. Unknown keys throw.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);
RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& os, const RunConfig& cfg);
const std::vector<std::string>& config_keys();

}  // namespace sttrack::harness
