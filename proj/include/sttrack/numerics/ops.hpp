#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sttrack/numerics/tensor.hpp"

// Differentiable operations. Spatial tensors use [rows, cols, channels]
// layout: row i runs along y, column j along x.
namespace sttrack::num {

struct ConvOptions {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;

  static ConvOptions same3x3() { return {1, 1, 1, 1}; }
  static ConvOptions strided(std::size_t s, std::size_t pad) { return {s, s, pad, pad}; }
};

// Cross-correlation. input [H, W, Cin], weight [kh, kw, Cin, Cout],
// bias [Cout] (may be undefined).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const ConvOptions& opt = {});

// Affine map over the last axis. weight [Cin, Cout], bias [Cout] or undefined.
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// grid [A, B, C], locations [n, 2] as (u along A, v along B). Values outside
// [0, A-1] x [0, B-1] read as zero. Returns [n, C].
Tensor bilinear_sample(const Tensor& grid, const Tensor& locations);

// Numerically stable softmax along `axis`.
Tensor softmax(const Tensor& input, std::size_t axis);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a [..., C] times m [..., 1], broadcasting m over channels.
Tensor mul_broadcast_last(const Tensor& a, const Tensor& m);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor slice_last(const Tensor& a, std::size_t start, std::size_t count);
// Index into axis 0, dropping it.
Tensor select_first(const Tensor& a, std::size_t index);
// Stack equally shaped tensors along a new axis 0.
Tensor stack_first(const std::vector<Tensor>& parts);

// [h, w, C] -> [h*fh, w*fw, C], nearest neighbour.
Tensor upsample_nearest(const Tensor& a, std::size_t fh, std::size_t fw);
// Non-overlapping mean pooling with window = stride = (kh, kw).
Tensor avg_pool(const Tensor& a, std::size_t kh, std::size_t kw);

// Per-segment max of src [P, C] rows grouped by `segment` (values in
// [0, segments)). Empty segments are zero. Ties go to the lowest row.
Tensor scatter_max(const Tensor& src, std::span<const std::size_t> segment, std::size_t segments);

// Multi-head deformable sampling, see kernels::DeformGeometry.
// value [A, B, C], offsets [A*B, heads*points*2], weights [A*B, heads*points]
// -> [A*B, C].
Tensor deform_sample(const Tensor& value, const Tensor& offsets, const Tensor& weights,
                     std::size_t heads, std::size_t points);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

struct FocalOptions {
  double alpha = 2.0;
  double beta = 4.0;
  double clamp = 1e-4;  // probabilities are clamped to [clamp, 1 - clamp]
};

// Penalty-reduced focal loss. prob and target have equal numel; cells with
// target == 1 are positives. Normalised by max(1, #positives).
Tensor focal_loss(const Tensor& prob, const Tensor& target, const FocalOptions& opt = {});

// sum over masked cells and channels of |pred - target|, divided by the
// number of masked cells (0 when there are none). pred/target [H, W, C],
// mask [H, W].
Tensor masked_l1(const Tensor& pred, const Tensor& target, const Tensor& mask);

}  // namespace sttrack::num
