#pragma once

#include <cstddef>
#include <iosfwd>
#include <string_view>

#include "sttrack/geometry/box.hpp"
#include "sttrack/geometry/grid.hpp"
#include "sttrack/numerics/ops.hpp"
#include "sttrack/numerics/params.hpp"

namespace sttrack::head {

using geom::Box3D;
using geom::GridConfig;

struct BoxSize {
  double w = 1.0, l = 1.0, h = 1.0;
  static BoxSize of(const Box3D& b) { return {b.w, b.l, b.h}; }
  bool operator==(const BoxSize&) const = default;
};

enum class Assignment {
  kForeground,  // every cell whose centre lies in the box
  kGaussian,    // CenterNet-style kernel, single positive at the centre cell
};

std::string_view to_string(Assignment a);
Assignment parse_assignment(std::string_view name);

struct HeadConfig {
  std::size_t in_channels = 32;
  std::size_t hidden = 32;
  num::FocalOptions focal{};
  double w_offset = 1.0, w_height = 1.0, w_orientation = 1.0;
  Assignment assignment = Assignment::kForeground;
};

// Registers head.{heatmap,offset,height,orientation}.{conv,out}.{w,b}.
void init_params(num::ParameterSet& params, const HeadConfig& cfg);

// All maps are [H, W, C].
struct HeadOutput {
  num::Tensor heatmap;      // C = 1, after sigmoid
  num::Tensor offset;       // C = 2 (o_x, o_y)
  num::Tensor height;       // C = 1
  num::Tensor orientation;  // C = 2 (sin, cos)
};

HeadOutput head_forward(const num::Tensor& u, const num::ParameterSet& params);

struct TargetMaps {
  num::Tensor heatmap;      // [H, W, 1]
  num::Tensor offset;       // [H, W, 2]
  num::Tensor height;       // [H, W, 1]
  num::Tensor orientation;  // [H, W, 2]
  num::Tensor valid_mask;   // [H, W, 1]
  std::size_t positives = 0;
  bool out_of_range = false;
};

// Offsets are measured from the cell corner: a centre at the middle of cell
// (i, j) gives (0.5, 0.5) there.
TargetMaps assign_targets(const Box3D& gt, const GridConfig& grid, const BoxSize& known_size,
                          Assignment assignment = Assignment::kForeground);

struct Prediction {
  Box3D box;
  double score = 0.0;
  std::size_t i = 0, j = 0;
};

Prediction decode(const num::Tensor& heatmap, const num::Tensor& offset, const num::Tensor& height,
                  const num::Tensor& orientation, const GridConfig& grid, const BoxSize& known_size);
inline Prediction decode(const HeadOutput& out, const GridConfig& grid, const BoxSize& known_size) {
  return decode(out.heatmap, out.offset, out.height, out.orientation, grid, known_size);
}

struct LossTerms {
  num::Tensor total;
  double heatmap = 0.0, offset = 0.0, height = 0.0, orientation = 0.0;
};

LossTerms loss(const HeadOutput& pred, const TargetMaps& target, const HeadConfig& cfg = {});

// P2 greyscale, values scaled by the map maximum; CSV holds the raw doubles.
void write_heatmap_pgm(std::ostream& os, const num::Tensor& heatmap);
void write_heatmap_csv(std::ostream& os, const num::Tensor& heatmap);

}  // namespace sttrack::head
