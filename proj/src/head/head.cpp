#include "sttrack/head/head.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

namespace sttrack::head {

namespace {

using num::Tensor;

constexpr const char* kBranches[] = {"heatmap", "offset", "height", "orientation"};
constexpr std::size_t kBranchChannels[] = {1, 2, 1, 2};

// CenterNet radius for a box of (h, w) cells at the given overlap.
double gaussian_radius(double h, double w, double min_overlap) {
  const double a1 = 1.0, b1 = h + w, c1 = w * h * (1 - min_overlap) / (1 + min_overlap);
  const double r1 = (b1 + std::sqrt(b1 * b1 - 4 * a1 * c1)) / 2;
  const double a2 = 4.0, b2 = 2 * (h + w), c2 = (1 - min_overlap) * w * h;
  const double r2 = (b2 + std::sqrt(b2 * b2 - 4 * a2 * c2)) / 2;
  const double a3 = 4 * min_overlap, b3 = -2 * min_overlap * (h + w), c3 = (min_overlap - 1) * w * h;
  const double r3 = (b3 + std::sqrt(b3 * b3 - 4 * a3 * c3)) / 2;
  return std::min({r1, r2, r3});
}

}  // namespace

std::string_view to_string(Assignment a) { return a == Assignment::kGaussian ? "gaussian" : "foreground"; }

Assignment parse_assignment(std::string_view name) {
  if (name == "foreground") return Assignment::kForeground;
  if (name == "gaussian") return Assignment::kGaussian;
  throw ConfigError("head.assignment: unknown value '" + std::string(name) + "'");
}

void init_params(num::ParameterSet& params, const HeadConfig& cfg) {
  const std::size_t c = cfg.in_channels, hid = cfg.hidden;
  for (std::size_t k = 0; k < 4; ++k) {
    const std::string base = std::string("head.") + kBranches[k];
    params.uniform(base + ".conv.w", {3, 3, c, hid}, 9 * c);
    params.uniform(base + ".conv.b", {hid}, 9 * c);
    params.uniform(base + ".out.w", {1, 1, hid, kBranchChannels[k]}, hid);
    if (k == 0) {
      // Starts the heatmap near 0.1 so the focal term is not swamped by negatives.
      params.constant(base + ".out.b", {1}, -2.19);
    } else {
      params.uniform(base + ".out.b", {kBranchChannels[k]}, hid);
    }
  }
}

HeadOutput head_forward(const Tensor& u, const num::ParameterSet& params) {
  if (u.rank() != 3) throw DimensionError("head_forward: U must be [H,W,C]");
  Tensor maps[4];
  for (std::size_t k = 0; k < 4; ++k) {
    const std::string base = std::string("head.") + kBranches[k];
    auto h = num::relu(
        num::conv2d(u, params.at(base + ".conv.w"), params.at(base + ".conv.b"), num::ConvOptions::same3x3()));
    maps[k] = num::conv2d(h, params.at(base + ".out.w"), params.at(base + ".out.b"));
  }
  return HeadOutput{num::sigmoid(maps[0]), maps[1], maps[2], maps[3]};
}

TargetMaps assign_targets(const Box3D& gt, const GridConfig& grid, const BoxSize& known_size,
                          Assignment assignment) {
  grid.validate();
  (void)known_size;
  const std::size_t rows = grid.H, cols = grid.W, cells = rows * cols;
  std::vector<double> heat(cells, 0.0), offset(cells * 2, 0.0), height(cells, 0.0), orient(cells * 2, 0.0),
      valid(cells, 0.0);
  // Continuous cell coordinates of the centre.
  const double cx = (gt.x - grid.x_min) / grid.cell_x();
  const double cy = (gt.y - grid.y_min) / grid.cell_y();
  const bool center_in = cx >= 0 && cy >= 0 && cx < static_cast<double>(cols) && cy < static_cast<double>(rows);
  const double s = std::sin(gt.theta), c = std::cos(gt.theta);

  auto supervise = [&](std::size_t k) {
    const std::size_t i = k / cols, j = k % cols;
    offset[2 * k] = cx - static_cast<double>(j);
    offset[2 * k + 1] = cy - static_cast<double>(i);
    height[k] = gt.z;
    orient[2 * k] = s;
    orient[2 * k + 1] = c;
    valid[k] = 1.0;
  };

  TargetMaps t;
  if (assignment == Assignment::kForeground) {
    const auto mask = geom::rasterize_box_mask(gt, grid);
    for (std::size_t k = 0; k < cells; ++k) {
      if (mask.values[k]) heat[k] = 1.0;
    }
    // A box narrower than the cell pitch can miss every cell centre; the
    // cell holding its centre stands in.
    if (mask.count() == 0 && center_in) {
      heat[static_cast<std::size_t>(cy) * cols + static_cast<std::size_t>(cx)] = 1.0;
    }
    for (std::size_t k = 0; k < cells; ++k) {
      if (heat[k] == 1.0) supervise(k);
    }
  } else if (center_in) {
    const auto ci = static_cast<std::size_t>(cy), cj = static_cast<std::size_t>(cx);
    const double radius =
        std::max(0.0, std::floor(gaussian_radius(gt.l / grid.cell_y(), gt.w / grid.cell_x(), 0.1)));
    const double sigma = (2 * radius + 1) / 6;
    const auto r = static_cast<long>(radius);
    for (long di = -r; di <= r; ++di) {
      for (long dj = -r; dj <= r; ++dj) {
        const long i = static_cast<long>(ci) + di, j = static_cast<long>(cj) + dj;
        if (i < 0 || j < 0 || i >= static_cast<long>(rows) || j >= static_cast<long>(cols)) continue;
        const double v = std::exp(-static_cast<double>(di * di + dj * dj) / (2 * sigma * sigma));
        heat[static_cast<std::size_t>(i) * cols + static_cast<std::size_t>(j)] = v;
      }
    }
    heat[ci * cols + cj] = 1.0;
    supervise(ci * cols + cj);
  }
  for (double v : valid) t.positives += v != 0.0;
  t.out_of_range = t.positives == 0;
  if (t.out_of_range) std::fill(heat.begin(), heat.end(), 0.0);
  t.heatmap = Tensor::from({rows, cols, 1}, std::move(heat));
  t.offset = Tensor::from({rows, cols, 2}, std::move(offset));
  t.height = Tensor::from({rows, cols, 1}, std::move(height));
  t.orientation = Tensor::from({rows, cols, 2}, std::move(orient));
  t.valid_mask = Tensor::from({rows, cols, 1}, std::move(valid));
  return t;
}

Prediction decode(const Tensor& heatmap, const Tensor& offset, const Tensor& height, const Tensor& orientation,
                  const GridConfig& grid, const BoxSize& known_size) {
  const std::size_t cells = heatmap.numel();
  if (cells == 0 || cells != grid.H * grid.W || offset.numel() != 2 * cells || height.numel() != cells ||
      orientation.numel() != 2 * cells) {
    throw DimensionError("decode: map shapes do not match the grid");
  }
  const auto hm = heatmap.data();
  std::size_t best = 0;
  for (std::size_t k = 1; k < cells; ++k) {
    if (hm[k] > hm[best]) best = k;
  }
  const std::size_t i = best / grid.W, j = best % grid.W;
  const auto off = offset.data();
  const auto ori = orientation.data();
  Prediction p;
  p.i = i;
  p.j = j;
  p.score = hm[best];
  p.box.x = (static_cast<double>(j) + off[2 * best]) * grid.cell_x() + grid.x_min;
  p.box.y = (static_cast<double>(i) + off[2 * best + 1]) * grid.cell_y() + grid.y_min;
  p.box.z = height.data()[best];
  p.box.theta = geom::normalize_angle(std::atan2(ori[2 * best], ori[2 * best + 1]));
  p.box.w = known_size.w;
  p.box.l = known_size.l;
  p.box.h = known_size.h;
  return p;
}

LossTerms loss(const HeadOutput& pred, const TargetMaps& target, const HeadConfig& cfg) {
  LossTerms out;
  auto focal = num::focal_loss(pred.heatmap, target.heatmap, cfg.focal);
  auto off = num::masked_l1(pred.offset, target.offset, target.valid_mask);
  auto hgt = num::masked_l1(pred.height, target.height, target.valid_mask);
  auto ori = num::masked_l1(pred.orientation, target.orientation, target.valid_mask);
  out.heatmap = focal.item();
  out.offset = off.item();
  out.height = hgt.item();
  out.orientation = ori.item();
  out.total = num::add(num::add(focal, num::scale(off, cfg.w_offset)),
                       num::add(num::scale(hgt, cfg.w_height), num::scale(ori, cfg.w_orientation)));
  return out;
}

void write_heatmap_pgm(std::ostream& os, const Tensor& heatmap) {
  if (heatmap.rank() < 2) throw DimensionError("heatmap dump: expected [H,W] or [H,W,1]");
  const std::size_t rows = heatmap.dim(0), cols = heatmap.dim(1);
  const auto v = heatmap.data();
  const double peak = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  os << "P2\n" << cols << ' ' << rows << "\n255\n";
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double x = peak > 0 ? std::clamp(v[i * cols + j] / peak, 0.0, 1.0) : 0.0;
      os << (j ? " " : "") << static_cast<int>(std::lround(255 * x));
    }
    os << '\n';
  }
}

void write_heatmap_csv(std::ostream& os, const Tensor& heatmap) {
  if (heatmap.rank() < 2) throw DimensionError("heatmap dump: expected [H,W] or [H,W,1]");
  const std::size_t rows = heatmap.dim(0), cols = heatmap.dim(1);
  const auto v = heatmap.data();
  char buf[32];
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", v[i * cols + j]);
      os << (j ? "," : "") << buf;
    }
    os << '\n';
  }
}

}  // namespace sttrack::head
