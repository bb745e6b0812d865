#include "sttrack/pillars/pillars.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sttrack/numerics/ops.hpp"

namespace sttrack::pillars {

namespace {

constexpr std::size_t kPointFeatures = 6;

std::size_t down_layers(std::size_t b) {
  if (b == 0 || (b & (b - 1)) != 0) throw ConfigError("backbone: stride b must be a power of two");
  return static_cast<std::size_t>(std::countr_zero(b));
}

}  // namespace

void init_params(num::ParameterSet& params, const PillarConfig& cfg, const GridConfig& grid) {
  const std::size_t cp = cfg.pillar_channels, c1 = cfg.feature_channels;
  params.uniform("pillars.mlp0.w", {kPointFeatures, cp}, kPointFeatures);
  params.uniform("pillars.mlp0.b", {cp}, kPointFeatures);
  params.uniform("pillars.mlp1.w", {cp, cp}, cp);
  params.uniform("pillars.mlp1.b", {cp}, cp);
  std::size_t cin = cp;
  for (std::size_t k = 0; k < down_layers(grid.b); ++k) {
    const std::string name = "backbone.down" + std::to_string(k);
    params.uniform(name + ".w", {3, 3, cin, c1}, 9 * cin);
    params.uniform(name + ".b", {c1}, 9 * cin);
    cin = c1;
  }
  for (int k = 0; k < 2; ++k) {
    const std::string name = "backbone.block" + std::to_string(k);
    params.uniform(name + ".w", {3, 3, cin, c1}, 9 * cin);
    params.uniform(name + ".b", {c1}, 9 * cin);
    cin = c1;
  }
}

TimedPointCloud stamp_time(std::span<const Point3> points, double age) {
  if (!(age >= 0.0)) throw ConfigError("stamp_time: age must be >= 0");
  TimedPointCloud out;
  out.points.reserve(points.size());
  for (const auto& p : points) out.points.push_back({p.x, p.y, p.z, age});
  return out;
}

PillarInputs gather_pillar_inputs(const TimedPointCloud& cloud, const GridConfig& grid) {
  grid.validate();
  const std::size_t nx = grid.pillars_x(), ny = grid.pillars_y();
  PillarInputs in;
  in.features.reserve(cloud.size() * kPointFeatures);
  in.pillar.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) continue;
    if (p.z < grid.z_min || p.z > grid.z_max) continue;
    const double fx = std::floor((p.x - grid.x_min) / grid.v_x);
    const double fy = std::floor((p.y - grid.y_min) / grid.v_y);
    if (fx < 0 || fy < 0 || fx >= static_cast<double>(nx) || fy >= static_cast<double>(ny)) continue;
    const auto col = static_cast<std::size_t>(fx);
    const auto row = static_cast<std::size_t>(fy);
    const double cx = grid.x_min + (static_cast<double>(col) + 0.5) * grid.v_x;
    const double cy = grid.y_min + (static_cast<double>(row) + 0.5) * grid.v_y;
    in.features.insert(in.features.end(), {p.x, p.y, p.z, p.t, p.x - cx, p.y - cy});
    in.pillar.push_back(row * nx + col);
  }
  return in;
}

num::Tensor dynamic_pillarize(const TimedPointCloud& cloud, const GridConfig& grid, const num::ParameterSet& params) {
  const auto in = gather_pillar_inputs(cloud, grid);
  const std::size_t nx = grid.pillars_x(), ny = grid.pillars_y();
  const auto x = num::Tensor::from({in.count(), kPointFeatures}, in.features);
  auto h = num::relu(num::linear(x, params.at("pillars.mlp0.w"), params.at("pillars.mlp0.b")));
  h = num::relu(num::linear(h, params.at("pillars.mlp1.w"), params.at("pillars.mlp1.b")));
  const std::size_t cp = h.shape().back();
  auto pooled = num::scatter_max(h, in.pillar, nx * ny);
  return num::reshape(pooled, {ny, nx, cp});
}

FeatureMap backbone(const num::Tensor& pillar_grid, const GridConfig& grid, const num::ParameterSet& params,
                    double frame_age) {
  if (pillar_grid.rank() != 3) throw DimensionError("backbone: input must be [H,W,C]");
  if (pillar_grid.dim(0) % grid.b != 0 || pillar_grid.dim(1) % grid.b != 0) {
    throw ConfigError("backbone: input extents not divisible by stride " + std::to_string(grid.b));
  }
  num::Tensor x = pillar_grid;
  for (std::size_t k = 0; k < down_layers(grid.b); ++k) {
    const std::string name = "backbone.down" + std::to_string(k);
    x = num::relu(num::conv2d(x, params.at(name + ".w"), params.at(name + ".b"), num::ConvOptions::strided(2, 1)));
  }
  for (int k = 0; k < 2; ++k) {
    const std::string name = "backbone.block" + std::to_string(k);
    x = num::relu(num::conv2d(x, params.at(name + ".w"), params.at(name + ".b"), num::ConvOptions::same3x3()));
  }
  if (x.dim(0) * grid.b != pillar_grid.dim(0) || x.dim(1) * grid.b != pillar_grid.dim(1)) {
    throw ConfigError("backbone: output extents do not equal input / b");
  }
  return FeatureMap{x, grid, frame_age};
}

FeatureMap encode_frame(const TimedPointCloud& cloud, const GridConfig& grid, const num::ParameterSet& params) {
  const double age = cloud.empty() ? 0.0 : cloud.points.front().t;
  return backbone(dynamic_pillarize(cloud, grid, params), grid, params, age);
}

void write_cloud(std::ostream& os, std::span<const Point3> points) {
  auto put = [&](float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    const unsigned char bytes[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                    static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    os.write(reinterpret_cast<const char*>(bytes), 4);
  };
  for (const auto& p : points) {
    put(static_cast<float>(p.x));
    put(static_cast<float>(p.y));
    put(static_cast<float>(p.z));
    put(0.0f);
  }
  if (!os) throw FormatError("cloud: write failed");
}

RawCloud read_cloud(std::istream& is) {
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() % 16 != 0) throw FormatError("cloud: size is not a multiple of 16 bytes");
  auto get = [&](std::size_t off) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[off]) | (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
    return static_cast<double>(std::bit_cast<float>(bits));
  };
  RawCloud out(bytes.size() / 16);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {get(16 * i), get(16 * i + 4), get(16 * i + 8)};
  return out;
}

void save_cloud(const std::filesystem::path& path, std::span<const Point3> points) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cloud: cannot open " + path.string());
  write_cloud(os, points);
}

RawCloud load_cloud(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cloud: cannot open " + path.string());
  return read_cloud(is);
}

}  // namespace sttrack::pillars
