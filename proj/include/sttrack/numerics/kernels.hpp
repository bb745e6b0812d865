#pragma once

// Raw compute kernels behind the differentiable ops.
//
// Every kernel exists twice: `serial` is the plain reference loop kept for
// testing, `parallel` is the OpenMP version the ops dispatch to. Parallel
// kernels partition work by output element so each value is accumulated in
// a fixed order; results do not depend on the thread count.
//
// Backward kernels accumulate (+=) into the provided gradient buffers; pass
// an empty span to skip a gradient.

#include <cstddef>
#include <span>

namespace sttrack::num::kernels {

// Layout: input [in_h, in_w, cin], weight [kh, kw, cin, cout], output
// [out_h, out_w, cout], all row-major.
struct ConvGeometry {
  std::size_t in_h = 0, in_w = 0, cin = 0;
  std::size_t kh = 1, kw = 1, cout = 0;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;

  std::size_t out_h() const { return (in_h + 2 * pad_h - kh) / stride_h + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad_w - kw) / stride_w + 1; }
};

// Deformable sampling over a [rows, cols, channels] value field. Query q sits
// at (q / cols, q % cols); offsets are [queries, heads*points*2] as (row,
// col) pairs; weights are [queries, heads*points]. Head h reads channels
// [h*d, (h+1)*d) with d = channels / heads.
struct DeformGeometry {
  std::size_t rows = 0, cols = 0, channels = 0;
  std::size_t heads = 1, points = 1;
  std::size_t queries() const { return rows * cols; }
  std::size_t head_dim() const { return channels / heads; }
};

namespace serial {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_out,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);

// out[r, o] = bias[o] + sum_i in[r, i] * w[i, o]; bias may be empty.
void linear_forward(std::size_t rows, std::size_t cin, std::size_t cout,
                    std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);
void linear_backward(std::size_t rows, std::size_t cin, std::size_t cout,
                     std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias);

void deform_forward(const DeformGeometry& g, std::span<const double> value,
                    std::span<const double> offsets, std::span<const double> weights,
                    std::span<double> output);
void deform_backward(const DeformGeometry& g, std::span<const double> value,
                     std::span<const double> offsets, std::span<const double> weights,
                     std::span<const double> grad_out, std::span<double> grad_value,
                     std::span<double> grad_offsets, std::span<double> grad_weights);

}  // namespace serial

namespace parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_out,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);

void linear_forward(std::size_t rows, std::size_t cin, std::size_t cout,
                    std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);
void linear_backward(std::size_t rows, std::size_t cin, std::size_t cout,
                     std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias);

void deform_forward(const DeformGeometry& g, std::span<const double> value,
                    std::span<const double> offsets, std::span<const double> weights,
                    std::span<double> output);
void deform_backward(const DeformGeometry& g, std::span<const double> value,
                     std::span<const double> offsets, std::span<const double> weights,
                     std::span<const double> grad_out, std::span<double> grad_value,
                     std::span<double> grad_offsets, std::span<double> grad_weights);

}  // namespace parallel

// Bilinear read of channel c from a [rows, cols, channels] field with zero
// padding outside. Also used by the standalone bilinear_sample op.
struct BilinearTap {
  long r0 = 0, c0 = 0;
  double fr = 0.0, fc = 0.0;
};
BilinearTap bilinear_tap(double row, double col);

}  // namespace sttrack::num::kernels
