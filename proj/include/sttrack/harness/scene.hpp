#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "sttrack/geometry/box.hpp"
#include "sttrack/numerics/random.hpp"
#include "sttrack/pillars/pillars.hpp"

namespace sttrack::harness {

using geom::Box3D;
using pillars::RawCloud;

enum class Motion { kStatic, kConstantVelocity, kConstantTurn };

std::string_view to_string(Motion m);
Motion parse_motion(std::string_view name);

struct SceneSpec {
  Motion motion = Motion::kConstantVelocity;
  double speed = 0.2;     // m/frame along the heading
  double yaw_rate = 0.0;  // rad/frame (constant-turn only)
  std::size_t target_points = 200;
  std::size_t clutter_points = 500;
  std::size_t distractors = 0;
  double noise = 0.02;  // per-axis gaussian sigma, metres
  std::size_t frames = 20;
  std::uint64_t seed = 1;
  double box_w = 2.0, box_l = 4.0, box_h = 1.6;
  double extent = 24.0;  // side of the square clutter region around the start
  double ground_z = -1.0;

  void validate() const;
};

struct Sequence {
  std::vector<RawCloud> clouds;
  std::vector<Box3D> boxes;
  std::size_t size() const { return boxes.size(); }
};

// Coordinates are rounded to float so a save/load round trip is exact.
Sequence generate_sequence(const SceneSpec& spec);

// Keeps frames 0, stride, 2*stride, ...
Sequence subsample_sequence(const Sequence& seq, std::size_t stride);

// Uniform over the six faces, weighted by face area.
RawCloud sample_box_surface(const Box3D& box, std::size_t count, double noise, num::Rng& rng);

// <dir>/gt.txt plus <dir>/clouds/NNNNNN.bin
void save_sequence(const std::filesystem::path& dir, const Sequence& seq);
Sequence load_sequence(const std::filesystem::path& dir);

}  // namespace sttrack::harness
