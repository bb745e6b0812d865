#include "sttrack/geometry/grid.hpp"

#include <cmath>

#include "sttrack/numerics/errors.hpp"

namespace sttrack::geom {

void GridConfig::validate() const {
  if (!(v_x > 0) || !(v_y > 0)) throw ConfigError("grid: voxel size must be positive");
  if (W < 1 || H < 1) throw ConfigError("grid: W and H must be >= 1");
  if (b < 1) throw ConfigError("grid: stride b must be >= 1");
  if (!(z_max > z_min)) throw ConfigError("grid: z_max must exceed z_min");
  if (!std::isfinite(x_min) || !std::isfinite(y_min)) throw ConfigError("grid: origin must be finite");
}

GridConfig GridConfig::centered(double extent, double pillar, std::size_t stride, double z_min, double z_max) {
  GridConfig g;
  const auto pillars = static_cast<std::size_t>(std::llround(extent / pillar));
  if (stride == 0 || pillars % stride != 0) throw ConfigError("grid: pillar count not divisible by stride");
  g.v_x = g.v_y = pillar;
  g.b = stride;
  g.W = g.H = pillars / stride;
  g.x_min = g.y_min = -static_cast<double>(pillars) * pillar / 2;
  g.z_min = z_min;
  g.z_max = z_max;
  g.validate();
  return g;
}

std::size_t BoxMask::count() const {
  std::size_t n = 0;
  for (auto v : values) n += v;
  return n;
}

num::Tensor BoxMask::to_tensor() const {
  std::vector<double> v(values.begin(), values.end());
  return num::Tensor::from({rows, cols, 1}, std::move(v));
}

BoxMask rasterize_box_mask(const Box3D& box, const GridConfig& grid) {
  grid.validate();
  BoxMask mask;
  mask.rows = grid.H;
  mask.cols = grid.W;
  mask.values.assign(grid.H * grid.W, 0);
  for (std::size_t i = 0; i < grid.H; ++i) {
    const double cy = grid.cell_center_y(i);
    for (std::size_t j = 0; j < grid.W; ++j) {
      mask.values[i * grid.W + j] = contains_bev(box, grid.cell_center_x(j), cy) ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace sttrack::geom
