#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sttrack/geometry/box.hpp"
#include "sttrack/numerics/tensor.hpp"

namespace sttrack::geom {

// BEV raster description. (W, H) are cell counts of the backbone output; the
// pillar grid is (W*b, H*b) with pitch (v_x, v_y), so a decoded cell spans
// v*b metres.
struct GridConfig {
  double x_min = -4.8, y_min = -4.8;
  double v_x = 0.15, v_y = 0.15;
  std::size_t W = 16, H = 16;
  std::size_t b = 4;
  double z_min = -3.0, z_max = 3.0;

  void validate() const;
  double cell_x() const { return v_x * static_cast<double>(b); }
  double cell_y() const { return v_y * static_cast<double>(b); }
  double x_max() const { return x_min + static_cast<double>(W) * cell_x(); }
  double y_max() const { return y_min + static_cast<double>(H) * cell_y(); }
  std::size_t pillars_x() const { return W * b; }
  std::size_t pillars_y() const { return H * b; }
  // Centre of output cell (row i, column j).
  double cell_center_x(std::size_t j) const { return x_min + (static_cast<double>(j) + 0.5) * cell_x(); }
  double cell_center_y(std::size_t i) const { return y_min + (static_cast<double>(i) + 0.5) * cell_y(); }

  // Square range of `extent` metres centred on the origin.
  static GridConfig centered(double extent, double pillar, std::size_t stride, double z_min, double z_max);
};

// H x W binary raster, row-major (row i along y).
struct BoxMask {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> values;

  std::uint8_t at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  std::size_t count() const;
  num::Tensor to_tensor() const;  // [H, W, 1]
};

BoxMask rasterize_box_mask(const Box3D& box, const GridConfig& grid);

}  // namespace sttrack::geom
