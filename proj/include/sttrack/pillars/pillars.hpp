#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "sttrack/geometry/box.hpp"
#include "sttrack/geometry/grid.hpp"
#include "sttrack/numerics/params.hpp"

namespace sttrack::pillars {

using geom::GridConfig;
using geom::TimedPointCloud;

struct Point3 {
  double x = 0.0, y = 0.0, z = 0.0;
  bool operator==(const Point3&) const = default;
};
using RawCloud = std::vector<Point3>;

// W x H x C BEV features at backbone resolution.
struct FeatureMap {
  num::Tensor values;  // [H, W, C]
  GridConfig grid;
  double frame_age = 0.0;
};

struct PillarConfig {
  std::size_t pillar_channels = 16;   // Cp
  std::size_t feature_channels = 32;  // C1
};

// Registers "pillars.*" and "backbone.*" parameters.
void init_params(num::ParameterSet& params, const PillarConfig& cfg, const GridConfig& grid);

TimedPointCloud stamp_time(std::span<const Point3> points, double age);

// Per-point inputs of the pillar MLP: (x, y, z, t, dx, dy) with (dx, dy) the
// offset from the pillar centre, plus the flat pillar index (row-major over
// the (H*b) x (W*b) pillar grid). Out-of-range points are dropped.
struct PillarInputs {
  std::vector<double> features;  // [P, 6]
  std::vector<std::size_t> pillar;
  std::size_t count() const { return pillar.size(); }
};
PillarInputs gather_pillar_inputs(const TimedPointCloud& cloud, const GridConfig& grid);

// Shared MLP (6 -> Cp -> Cp, ReLU after each layer) then scatter-max per
// pillar. Returns [H*b, W*b, Cp]; empty pillars are zero.
num::Tensor dynamic_pillarize(const TimedPointCloud& cloud, const GridConfig& grid, const num::ParameterSet& params);

// [conv3x3 s2 + ReLU] x log2(b), then two conv3x3 s1 + ReLU blocks.
FeatureMap backbone(const num::Tensor& pillar_grid, const GridConfig& grid, const num::ParameterSet& params,
                    double frame_age = 0.0);

FeatureMap encode_frame(const TimedPointCloud& cloud, const GridConfig& grid, const num::ParameterSet& params);

// Little-endian float32 x4 per point (x, y, z, reserved).
void write_cloud(std::ostream& os, std::span<const Point3> points);
RawCloud read_cloud(std::istream& is);
void save_cloud(const std::filesystem::path& path, std::span<const Point3> points);
RawCloud load_cloud(const std::filesystem::path& path);

}  // namespace sttrack::pillars
