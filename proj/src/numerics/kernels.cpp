#include "sttrack/numerics/kernels.hpp"

#include <cmath>
#include <vector>

namespace sttrack::num::kernels {

BilinearTap bilinear_tap(double row, double col) {
  BilinearTap t;
  const double r0 = std::floor(row);
  const double c0 = std::floor(col);
  t.r0 = static_cast<long>(r0);
  t.c0 = static_cast<long>(c0);
  t.fr = row - r0;
  t.fc = col - c0;
  return t;
}

namespace {

inline bool inside(long r, long c, std::size_t rows, std::size_t cols) {
  return r >= 0 && c >= 0 && r < static_cast<long>(rows) && c < static_cast<long>(cols);
}

// Corner order: (r0,c0), (r0,c0+1), (r0+1,c0), (r0+1,c0+1).
struct Corners {
  long r[4];
  long c[4];
  double w[4];
  double dw_dr[4];
  double dw_dc[4];
};

inline Corners corners_of(const BilinearTap& t) {
  Corners k;
  const double a = 1.0 - t.fr, b = t.fr, p = 1.0 - t.fc, q = t.fc;
  k.r[0] = t.r0;     k.c[0] = t.c0;     k.w[0] = a * p; k.dw_dr[0] = -p; k.dw_dc[0] = -a;
  k.r[1] = t.r0;     k.c[1] = t.c0 + 1; k.w[1] = a * q; k.dw_dr[1] = -q; k.dw_dc[1] = a;
  k.r[2] = t.r0 + 1; k.c[2] = t.c0;     k.w[2] = b * p; k.dw_dr[2] = p;  k.dw_dc[2] = -b;
  k.r[3] = t.r0 + 1; k.c[3] = t.c0 + 1; k.w[3] = b * q; k.dw_dr[3] = q;  k.dw_dc[3] = b;
  return k;
}

// Per-query part of the deformable backward: offsets and weights gradients.
void deform_query_backward(const DeformGeometry& g, std::size_t q,
                           std::span<const double> value, std::span<const double> offsets,
                           std::span<const double> weights, std::span<const double> grad_out,
                           std::span<double> grad_offsets, std::span<double> grad_weights) {
  const std::size_t d = g.head_dim();
  const double qr = static_cast<double>(q / g.cols);
  const double qc = static_cast<double>(q % g.cols);
  for (std::size_t l = 0; l < g.heads; ++l) {
    for (std::size_t k = 0; k < g.points; ++k) {
      const std::size_t lk = l * g.points + k;
      const double w = weights[q * g.heads * g.points + lk];
      const double* off = &offsets[(q * g.heads * g.points + lk) * 2];
      const auto cs = corners_of(bilinear_tap(qr + off[0], qc + off[1]));
      double gw = 0.0, gr = 0.0, gc = 0.0;
      for (int n = 0; n < 4; ++n) {
        if (!inside(cs.r[n], cs.c[n], g.rows, g.cols)) continue;
        const double* v = &value[(static_cast<std::size_t>(cs.r[n]) * g.cols +
                                  static_cast<std::size_t>(cs.c[n])) * g.channels + l * d];
        const double* go = &grad_out[q * g.channels + l * d];
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += go[c] * v[c];
        gw += cs.w[n] * dot;
        gr += cs.dw_dr[n] * dot;
        gc += cs.dw_dc[n] * dot;
      }
      if (!grad_weights.empty()) grad_weights[q * g.heads * g.points + lk] += gw;
      if (!grad_offsets.empty()) {
        grad_offsets[(q * g.heads * g.points + lk) * 2] += w * gr;
        grad_offsets[(q * g.heads * g.points + lk) * 2 + 1] += w * gc;
      }
    }
  }
}

void deform_value_backward(const DeformGeometry& g, std::size_t q,
                           std::span<const double> offsets, std::span<const double> weights,
                           std::span<const double> grad_out, std::span<double> grad_value) {
  const std::size_t d = g.head_dim();
  const double qr = static_cast<double>(q / g.cols);
  const double qc = static_cast<double>(q % g.cols);
  for (std::size_t l = 0; l < g.heads; ++l) {
    for (std::size_t k = 0; k < g.points; ++k) {
      const std::size_t lk = l * g.points + k;
      const double w = weights[q * g.heads * g.points + lk];
      const double* off = &offsets[(q * g.heads * g.points + lk) * 2];
      const auto cs = corners_of(bilinear_tap(qr + off[0], qc + off[1]));
      for (int n = 0; n < 4; ++n) {
        if (!inside(cs.r[n], cs.c[n], g.rows, g.cols)) continue;
        double* gv = &grad_value[(static_cast<std::size_t>(cs.r[n]) * g.cols +
                                  static_cast<std::size_t>(cs.c[n])) * g.channels + l * d];
        const double* go = &grad_out[q * g.channels + l * d];
        const double s = w * cs.w[n];
        for (std::size_t c = 0; c < d; ++c) gv[c] += s * go[c];
      }
    }
  }
}

void deform_query_forward(const DeformGeometry& g, std::size_t q, std::span<const double> value,
                          std::span<const double> offsets, std::span<const double> weights,
                          std::span<double> output) {
  const std::size_t d = g.head_dim();
  const double qr = static_cast<double>(q / g.cols);
  const double qc = static_cast<double>(q % g.cols);
  double* out = &output[q * g.channels];
  for (std::size_t c = 0; c < g.channels; ++c) out[c] = 0.0;
  for (std::size_t l = 0; l < g.heads; ++l) {
    for (std::size_t k = 0; k < g.points; ++k) {
      const std::size_t lk = l * g.points + k;
      const double w = weights[q * g.heads * g.points + lk];
      const double* off = &offsets[(q * g.heads * g.points + lk) * 2];
      const auto cs = corners_of(bilinear_tap(qr + off[0], qc + off[1]));
      for (int n = 0; n < 4; ++n) {
        if (!inside(cs.r[n], cs.c[n], g.rows, g.cols)) continue;
        const double* v = &value[(static_cast<std::size_t>(cs.r[n]) * g.cols +
                                  static_cast<std::size_t>(cs.c[n])) * g.channels + l * d];
        const double s = w * cs.w[n];
        for (std::size_t c = 0; c < d; ++c) out[l * d + c] += s * v[c];
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Serial reference
// ---------------------------------------------------------------------------
namespace serial {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        double acc = bias.empty() ? 0.0 : bias[co];
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const long iy = static_cast<long>(oy * g.stride_h + ky) - static_cast<long>(g.pad_h);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const long ix = static_cast<long>(ox * g.stride_w + kx) - static_cast<long>(g.pad_w);
            if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              acc += input[(static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.cin + ci] *
                     weight[((ky * g.kw + kx) * g.cin + ci) * g.cout + co];
            }
          }
        }
        output[(oy * ow + ox) * g.cout + co] = acc;
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_out,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        const double go = grad_out[(oy * ow + ox) * g.cout + co];
        if (!grad_bias.empty()) grad_bias[co] += go;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const long iy = static_cast<long>(oy * g.stride_h + ky) - static_cast<long>(g.pad_h);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const long ix = static_cast<long>(ox * g.stride_w + kx) - static_cast<long>(g.pad_w);
            if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              const std::size_t in_idx =
                  (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.cin + ci;
              const std::size_t w_idx = ((ky * g.kw + kx) * g.cin + ci) * g.cout + co;
              if (!grad_weight.empty()) grad_weight[w_idx] += input[in_idx] * go;
              if (!grad_input.empty()) grad_input[in_idx] += weight[w_idx] * go;
            }
          }
        }
      }
    }
  }
}

void linear_forward(std::size_t rows, std::size_t cin, std::size_t cout,
                    std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < cout; ++o) {
      double acc = bias.empty() ? 0.0 : bias[o];
      for (std::size_t i = 0; i < cin; ++i) acc += input[r * cin + i] * weight[i * cout + o];
      output[r * cout + o] = acc;
    }
  }
}

void linear_backward(std::size_t rows, std::size_t cin, std::size_t cout,
                     std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < cout; ++o) {
      const double go = grad_out[r * cout + o];
      if (!grad_bias.empty()) grad_bias[o] += go;
      for (std::size_t i = 0; i < cin; ++i) {
        if (!grad_weight.empty()) grad_weight[i * cout + o] += input[r * cin + i] * go;
        if (!grad_input.empty()) grad_input[r * cin + i] += weight[i * cout + o] * go;
      }
    }
  }
}

void deform_forward(const DeformGeometry& g, std::span<const double> value,
                    std::span<const double> offsets, std::span<const double> weights,
                    std::span<double> output) {
  for (std::size_t q = 0; q < g.queries(); ++q) deform_query_forward(g, q, value, offsets, weights, output);
}

void deform_backward(const DeformGeometry& g, std::span<const double> value,
                     std::span<const double> offsets, std::span<const double> weights,
                     std::span<const double> grad_out, std::span<double> grad_value,
                     std::span<double> grad_offsets, std::span<double> grad_weights) {
  for (std::size_t q = 0; q < g.queries(); ++q) {
    deform_query_backward(g, q, value, offsets, weights, grad_out, grad_offsets, grad_weights);
    if (!grad_value.empty()) deform_value_backward(g, q, offsets, weights, grad_out, grad_value);
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP
// ---------------------------------------------------------------------------
namespace parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const long oh = static_cast<long>(g.out_h());
  const std::size_t ow = g.out_w();
#pragma omp parallel for schedule(static)
  for (long oy = 0; oy < oh; ++oy) {
    std::vector<double> acc(g.cout);
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t co = 0; co < g.cout; ++co) acc[co] = bias.empty() ? 0.0 : bias[co];
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const long iy = oy * static_cast<long>(g.stride_h) + static_cast<long>(ky) -
                        static_cast<long>(g.pad_h);
        if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const long ix = static_cast<long>(ox * g.stride_w + kx) - static_cast<long>(g.pad_w);
          if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
          const double* in = &input[(static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.cin];
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const double v = in[ci];
            const double* w = &weight[((ky * g.kw + kx) * g.cin + ci) * g.cout];
            for (std::size_t co = 0; co < g.cout; ++co) acc[co] += v * w[co];
          }
        }
      }
      double* out = &output[(static_cast<std::size_t>(oy) * ow + ox) * g.cout];
      for (std::size_t co = 0; co < g.cout; ++co) out[co] = acc[co];
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_out,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  if (!grad_bias.empty()) {
    for (std::size_t p = 0; p < oh * ow; ++p) {
      for (std::size_t co = 0; co < g.cout; ++co) grad_bias[co] += grad_out[p * g.cout + co];
    }
  }
  if (!grad_weight.empty()) {
    const long taps = static_cast<long>(g.kh * g.kw * g.cin);
#pragma omp parallel for schedule(static)
    for (long t = 0; t < taps; ++t) {
      const std::size_t ci = static_cast<std::size_t>(t) % g.cin;
      const std::size_t kx = (static_cast<std::size_t>(t) / g.cin) % g.kw;
      const std::size_t ky = static_cast<std::size_t>(t) / (g.cin * g.kw);
      std::vector<double> acc(g.cout, 0.0);
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const long iy = static_cast<long>(oy * g.stride_h + ky) - static_cast<long>(g.pad_h);
        if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const long ix = static_cast<long>(ox * g.stride_w + kx) - static_cast<long>(g.pad_w);
          if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
          const double v =
              input[(static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.cin + ci];
          const double* go = &grad_out[(oy * ow + ox) * g.cout];
          for (std::size_t co = 0; co < g.cout; ++co) acc[co] += v * go[co];
        }
      }
      double* gw = &grad_weight[static_cast<std::size_t>(t) * g.cout];
      for (std::size_t co = 0; co < g.cout; ++co) gw[co] += acc[co];
    }
  }
  if (!grad_input.empty()) {
    const long ih = static_cast<long>(g.in_h);
#pragma omp parallel for schedule(static)
    for (long iy = 0; iy < ih; ++iy) {
      std::vector<double> acc(g.cin);
      for (std::size_t ix = 0; ix < g.in_w; ++ix) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const long ny = iy + static_cast<long>(g.pad_h) - static_cast<long>(ky);
          if (ny < 0 || ny % static_cast<long>(g.stride_h) != 0) continue;
          const std::size_t oy = static_cast<std::size_t>(ny) / g.stride_h;
          if (oy >= oh) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const long nx = static_cast<long>(ix + g.pad_w) - static_cast<long>(kx);
            if (nx < 0 || nx % static_cast<long>(g.stride_w) != 0) continue;
            const std::size_t ox = static_cast<std::size_t>(nx) / g.stride_w;
            if (ox >= ow) continue;
            const double* go = &grad_out[(oy * ow + ox) * g.cout];
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              const double* w = &weight[((ky * g.kw + kx) * g.cin + ci) * g.cout];
              double s = 0.0;
              for (std::size_t co = 0; co < g.cout; ++co) s += w[co] * go[co];
              acc[ci] += s;
            }
          }
        }
        double* gi = &grad_input[(static_cast<std::size_t>(iy) * g.in_w + ix) * g.cin];
        for (std::size_t ci = 0; ci < g.cin; ++ci) gi[ci] += acc[ci];
      }
    }
  }
}

void linear_forward(std::size_t rows, std::size_t cin, std::size_t cout,
                    std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const long n = static_cast<long>(rows);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < n; ++r) {
    double* out = &output[static_cast<std::size_t>(r) * cout];
    for (std::size_t o = 0; o < cout; ++o) out[o] = bias.empty() ? 0.0 : bias[o];
    const double* in = &input[static_cast<std::size_t>(r) * cin];
    for (std::size_t i = 0; i < cin; ++i) {
      const double v = in[i];
      const double* w = &weight[i * cout];
      for (std::size_t o = 0; o < cout; ++o) out[o] += v * w[o];
    }
  }
}

void linear_backward(std::size_t rows, std::size_t cin, std::size_t cout,
                     std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  if (!grad_bias.empty()) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < cout; ++o) grad_bias[o] += grad_out[r * cout + o];
    }
  }
  if (!grad_weight.empty()) {
    const long n = static_cast<long>(cin);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
      std::vector<double> acc(cout, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        const double v = input[r * cin + static_cast<std::size_t>(i)];
        const double* go = &grad_out[r * cout];
        for (std::size_t o = 0; o < cout; ++o) acc[o] += v * go[o];
      }
      double* gw = &grad_weight[static_cast<std::size_t>(i) * cout];
      for (std::size_t o = 0; o < cout; ++o) gw[o] += acc[o];
    }
  }
  if (!grad_input.empty()) {
    const long n = static_cast<long>(rows);
#pragma omp parallel for schedule(static)
    for (long r = 0; r < n; ++r) {
      const double* go = &grad_out[static_cast<std::size_t>(r) * cout];
      for (std::size_t i = 0; i < cin; ++i) {
        const double* w = &weight[i * cout];
        double s = 0.0;
        for (std::size_t o = 0; o < cout; ++o) s += w[o] * go[o];
        grad_input[static_cast<std::size_t>(r) * cin + i] += s;
      }
    }
  }
}

void deform_forward(const DeformGeometry& g, std::span<const double> value,
                    std::span<const double> offsets, std::span<const double> weights,
                    std::span<double> output) {
  const long n = static_cast<long>(g.queries());
#pragma omp parallel for schedule(static)
  for (long q = 0; q < n; ++q) {
    deform_query_forward(g, static_cast<std::size_t>(q), value, offsets, weights, output);
  }
}

void deform_backward(const DeformGeometry& g, std::span<const double> value,
                     std::span<const double> offsets, std::span<const double> weights,
                     std::span<const double> grad_out, std::span<double> grad_value,
                     std::span<double> grad_offsets, std::span<double> grad_weights) {
  const long n = static_cast<long>(g.queries());
#pragma omp parallel for schedule(static)
  for (long q = 0; q < n; ++q) {
    deform_query_backward(g, static_cast<std::size_t>(q), value, offsets, weights, grad_out,
                          grad_offsets, grad_weights);
  }
  // Value gradients scatter across queries; kept sequential for a fixed order.
  if (!grad_value.empty()) {
    for (std::size_t q = 0; q < g.queries(); ++q) {
      deform_value_backward(g, q, offsets, weights, grad_out, grad_value);
    }
  }
}

}  // namespace parallel

}  // namespace sttrack::num::kernels
