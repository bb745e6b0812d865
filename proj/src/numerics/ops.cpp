#include "sttrack/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "sttrack/numerics/kernels.hpp"

namespace sttrack::num {

namespace {

using detail::Node;

std::span<const double> maybe(const Tensor& t) {
  return t.defined() ? t.data() : std::span<const double>{};
}

std::span<double> grad_if(Node& n) {
  return n.requires_grad ? std::span<double>(n.grad) : std::span<double>{};
}

void require_shape(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw DimensionError(std::string(op) + ": " + detail);
}

std::uint64_t pack_bits(const std::vector<bool>& bits, std::size_t start) {
  std::uint64_t word = 0;
  for (std::size_t b = 0; b < 64 && start + b < bits.size(); ++b) {
    if (bits[start + b]) word |= (1ULL << b);
  }
  return word;
}

void fold_mask(const std::vector<bool>& bits) {
  if (!branch_tracking()) return;
  for (std::size_t s = 0; s < bits.size(); s += 64) fold_branch(pack_bits(bits, s));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvOptions& opt) {
  require_shape(input.rank() == 3, "conv2d", "input must be [H,W,C], got " + shape_str(input.shape()));
  require_shape(weight.rank() == 4, "conv2d", "weight must be [kh,kw,cin,cout]");
  kernels::ConvGeometry g;
  g.in_h = input.dim(0);
  g.in_w = input.dim(1);
  g.cin = input.dim(2);
  g.kh = weight.dim(0);
  g.kw = weight.dim(1);
  g.cout = weight.dim(3);
  g.stride_h = opt.stride_h;
  g.stride_w = opt.stride_w;
  g.pad_h = opt.pad_h;
  g.pad_w = opt.pad_w;
  require_shape(weight.dim(2) == g.cin, "conv2d",
                "weight cin " + std::to_string(weight.dim(2)) + " != input channels " + std::to_string(g.cin));
  require_shape(!bias.defined() || (bias.rank() == 1 && bias.dim(0) == g.cout), "conv2d", "bias must be [cout]");
  require_shape(g.kh >= 1 && g.kw >= 1 && g.stride_h >= 1 && g.stride_w >= 1, "conv2d",
                "kernel and stride must be >= 1");
  require_shape(g.in_h + 2 * g.pad_h >= g.kh && g.in_w + 2 * g.pad_w >= g.kw, "conv2d",
                "padded input smaller than kernel");

  std::vector<double> out(g.out_h() * g.out_w() * g.cout);
  kernels::parallel::conv2d_forward(g, input.data(), weight.data(), maybe(bias), out);

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return Tensor::make_result("conv2d", {g.out_h(), g.out_w(), g.cout}, std::move(out), std::move(inputs),
                             [g, has_bias](Node& self) {
                               Node& in = *self.inputs[0];
                               Node& w = *self.inputs[1];
                               std::span<double> gb;
                               if (has_bias) gb = grad_if(*self.inputs[2]);
                               kernels::parallel::conv2d_backward(g, in.data, w.data, self.grad, grad_if(in),
                                                                  grad_if(w), gb);
                             });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_shape(input.rank() >= 1 && weight.rank() == 2, "linear", "bad ranks");
  const std::size_t cin = weight.dim(0), cout = weight.dim(1);
  require_shape(input.shape().back() == cin, "linear",
                "input last extent " + std::to_string(input.shape().back()) + " != " + std::to_string(cin));
  require_shape(!bias.defined() || (bias.rank() == 1 && bias.dim(0) == cout), "linear", "bias must be [cout]");
  const std::size_t rows = input.numel() / cin;
  std::vector<double> out(rows * cout);
  kernels::parallel::linear_forward(rows, cin, cout, input.data(), weight.data(), maybe(bias), out);
  Shape shape = input.shape();
  shape.back() = cout;
  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return Tensor::make_result("linear", std::move(shape), std::move(out), std::move(inputs),
                             [rows, cin, cout, has_bias](Node& self) {
                               Node& in = *self.inputs[0];
                               Node& w = *self.inputs[1];
                               std::span<double> gb;
                               if (has_bias) gb = grad_if(*self.inputs[2]);
                               kernels::parallel::linear_backward(rows, cin, cout, in.data, w.data, self.grad,
                                                                  grad_if(in), grad_if(w), gb);
                             });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_shape(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), "matmul",
                shape_str(a.shape()) + " x " + shape_str(b.shape()));
  return linear(a, b, Tensor{});
}

Tensor transpose(const Tensor& a) {
  require_shape(a.rank() == 2, "transpose", "needs rank 2");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return Tensor::make_result("transpose", {n, m}, std::move(out), {a}, [m, n](Node& self) {
    auto& gi = self.inputs[0]->grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gi[i * n + j] += self.grad[j * m + i];
  });
}

Tensor bilinear_sample(const Tensor& grid, const Tensor& locations) {
  require_shape(grid.rank() == 3, "bilinear_sample", "grid must be [A,B,C]");
  require_shape(locations.rank() == 2 && locations.dim(1) == 2, "bilinear_sample", "locations must be [n,2]");
  const std::size_t A = grid.dim(0), B = grid.dim(1), C = grid.dim(2), n = locations.dim(0);
  auto gv = grid.data();
  auto loc = locations.data();
  std::vector<double> out(n * C, 0.0);
  std::vector<kernels::BilinearTap> taps(n);
  for (std::size_t p = 0; p < n; ++p) {
    taps[p] = kernels::bilinear_tap(loc[2 * p], loc[2 * p + 1]);
    if (branch_tracking()) {
      fold_branch(static_cast<std::uint64_t>(taps[p].r0));
      fold_branch(static_cast<std::uint64_t>(taps[p].c0));
    }
  }
  auto read = [A, B, C](std::span<const double> g, long r, long c, std::size_t ch) {
    if (r < 0 || c < 0 || r >= static_cast<long>(A) || c >= static_cast<long>(B)) return 0.0;
    return g[(static_cast<std::size_t>(r) * B + static_cast<std::size_t>(c)) * C + ch];
  };
  for (std::size_t p = 0; p < n; ++p) {
    const auto& t = taps[p];
    for (std::size_t ch = 0; ch < C; ++ch) {
      out[p * C + ch] = (1 - t.fr) * (1 - t.fc) * read(gv, t.r0, t.c0, ch) +
                        (1 - t.fr) * t.fc * read(gv, t.r0, t.c0 + 1, ch) +
                        t.fr * (1 - t.fc) * read(gv, t.r0 + 1, t.c0, ch) +
                        t.fr * t.fc * read(gv, t.r0 + 1, t.c0 + 1, ch);
    }
  }
  return Tensor::make_result(
      "bilinear_sample", {n, C}, std::move(out), {grid, locations},
      [A, B, C, n, taps = std::move(taps), read](Node& self) {
        Node& gnode = *self.inputs[0];
        Node& lnode = *self.inputs[1];
        auto add_at = [&](long r, long c, std::size_t ch, double v) {
          if (r < 0 || c < 0 || r >= static_cast<long>(A) || c >= static_cast<long>(B)) return;
          gnode.grad[(static_cast<std::size_t>(r) * B + static_cast<std::size_t>(c)) * C + ch] += v;
        };
        for (std::size_t p = 0; p < n; ++p) {
          const auto& t = taps[p];
          double gr = 0.0, gc = 0.0;
          for (std::size_t ch = 0; ch < C; ++ch) {
            const double go = self.grad[p * C + ch];
            if (gnode.requires_grad) {
              add_at(t.r0, t.c0, ch, go * (1 - t.fr) * (1 - t.fc));
              add_at(t.r0, t.c0 + 1, ch, go * (1 - t.fr) * t.fc);
              add_at(t.r0 + 1, t.c0, ch, go * t.fr * (1 - t.fc));
              add_at(t.r0 + 1, t.c0 + 1, ch, go * t.fr * t.fc);
            }
            const double v00 = read(gnode.data, t.r0, t.c0, ch);
            const double v01 = read(gnode.data, t.r0, t.c0 + 1, ch);
            const double v10 = read(gnode.data, t.r0 + 1, t.c0, ch);
            const double v11 = read(gnode.data, t.r0 + 1, t.c0 + 1, ch);
            gr += go * ((1 - t.fc) * (v10 - v00) + t.fc * (v11 - v01));
            gc += go * ((1 - t.fr) * (v01 - v00) + t.fr * (v11 - v10));
          }
          if (lnode.requires_grad) {
            lnode.grad[2 * p] += gr;
            lnode.grad[2 * p + 1] += gc;
          }
        }
      });
}

Tensor softmax(const Tensor& input, std::size_t axis) {
  const auto& s = input.shape();
  require_shape(axis < s.size(), "softmax", "axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  auto x = input.data();
  std::vector<double> y(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = x[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, x[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(x[base + k * inner] - mx);
        y[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) y[base + k * inner] /= z;
    }
  }
  return Tensor::make_result("softmax", s, std::move(y), {input}, [outer, inner, len](Node& self) {
    auto& gi = self.inputs[0]->grad;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += self.grad[base + k * inner] * self.data[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t i = base + k * inner;
          gi[i] += self.data[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_shape(a.shape() == b.shape(), "add", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_shape(a.shape() == b.shape(), "mul", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& p = *self.inputs[0];
    Node& q = *self.inputs[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (p.requires_grad) p.grad[i] += self.grad[i] * q.data[i];
      if (q.requires_grad) q.grad[i] += self.grad[i] * p.data[i];
    }
  });
}

Tensor mul_broadcast_last(const Tensor& a, const Tensor& m) {
  require_shape(a.rank() >= 1 && m.rank() == a.rank() && m.shape().back() == 1, "mul_broadcast_last",
                shape_str(a.shape()) + " vs " + shape_str(m.shape()));
  for (std::size_t i = 0; i + 1 < a.rank(); ++i) require_shape(a.dim(i) == m.dim(i), "mul_broadcast_last", "lead dims");
  const std::size_t C = a.shape().back();
  const std::size_t cells = a.numel() / C;
  auto x = a.data(), y = m.data();
  std::vector<double> out(x.size());
  for (std::size_t p = 0; p < cells; ++p)
    for (std::size_t c = 0; c < C; ++c) out[p * C + c] = x[p * C + c] * y[p];
  return Tensor::make_result("mul_broadcast_last", a.shape(), std::move(out), {a, m}, [cells, C](Node& self) {
    Node& p = *self.inputs[0];
    Node& q = *self.inputs[1];
    for (std::size_t i = 0; i < cells; ++i) {
      for (std::size_t c = 0; c < C; ++c) {
        const double g = self.grad[i * C + c];
        if (p.requires_grad) p.grad[i * C + c] += g * q.data[i];
        if (q.requires_grad) q.grad[i] += g * p.data[i * C + c];
      }
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * s;
  return Tensor::make_result("scale", a.shape(), std::move(out), {a}, [s](Node& self) {
    auto& gi = self.inputs[0]->grad;
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i] * s;
  });
}

Tensor relu(const Tensor& a) {
  auto x = a.data();
  std::vector<double> out(x.size());
  std::vector<bool> on(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    on[i] = x[i] > 0.0;
    out[i] = on[i] ? x[i] : 0.0;
  }
  fold_mask(on);
  return Tensor::make_result("relu", a.shape(), std::move(out), {a}, [on = std::move(on)](Node& self) {
    auto& gi = self.inputs[0]->grad;
    for (std::size_t i = 0; i < gi.size(); ++i) {
      if (on[i]) gi[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] >= 0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
  }
  return Tensor::make_result("sigmoid", a.shape(), std::move(out), {a}, [](Node& self) {
    auto& gi = self.inputs[0]->grad;
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i] * self.data[i] * (1.0 - self.data[i]);
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_shape(numel_of(shape) == a.numel(), "reshape", shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::make_result("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& gi = self.inputs[0]->grad;
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
  });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  require_shape(a.rank() == b.rank() && a.rank() >= 1, "concat_last", "rank mismatch");
  for (std::size_t i = 0; i + 1 < a.rank(); ++i)
    require_shape(a.dim(i) == b.dim(i), "concat_last", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t ca = a.shape().back(), cb = b.shape().back();
  const std::size_t cells = a.numel() / ca;
  auto x = a.data(), y = b.data();
  std::vector<double> out(cells * (ca + cb));
  for (std::size_t p = 0; p < cells; ++p) {
    std::copy_n(&x[p * ca], ca, &out[p * (ca + cb)]);
    std::copy_n(&y[p * cb], cb, &out[p * (ca + cb) + ca]);
  }
  Shape shape = a.shape();
  shape.back() = ca + cb;
  return Tensor::make_result("concat_last", std::move(shape), std::move(out), {a, b}, [cells, ca, cb](Node& self) {
    Node& p = *self.inputs[0];
    Node& q = *self.inputs[1];
    for (std::size_t i = 0; i < cells; ++i) {
      if (p.requires_grad)
        for (std::size_t c = 0; c < ca; ++c) p.grad[i * ca + c] += self.grad[i * (ca + cb) + c];
      if (q.requires_grad)
        for (std::size_t c = 0; c < cb; ++c) q.grad[i * cb + c] += self.grad[i * (ca + cb) + ca + c];
    }
  });
}

Tensor slice_last(const Tensor& a, std::size_t start, std::size_t count) {
  require_shape(a.rank() >= 1 && start + count <= a.shape().back(), "slice_last", "range out of bounds");
  const std::size_t C = a.shape().back();
  const std::size_t cells = a.numel() / C;
  auto x = a.data();
  std::vector<double> out(cells * count);
  for (std::size_t p = 0; p < cells; ++p) std::copy_n(&x[p * C + start], count, &out[p * count]);
  Shape shape = a.shape();
  shape.back() = count;
  return Tensor::make_result("slice_last", std::move(shape), std::move(out), {a}, [cells, C, start, count](Node& self) {
    auto& gi = self.inputs[0]->grad;
    for (std::size_t p = 0; p < cells; ++p)
      for (std::size_t c = 0; c < count; ++c) gi[p * C + start + c] += self.grad[p * count + c];
  });
}

Tensor select_first(const Tensor& a, std::size_t index) {
  require_shape(a.rank() >= 1 && index < a.dim(0), "select_first", "index out of range");
  const std::size_t block = a.numel() / a.dim(0);
  auto x = a.data();
  std::vector<double> out(x.begin() + static_cast<long>(index * block),
                          x.begin() + static_cast<long>((index + 1) * block));
  Shape shape(a.shape().begin() + 1, a.shape().end());
  return Tensor::make_result("select_first", std::move(shape), std::move(out), {a}, [index, block](Node& self) {
    auto& gi = self.inputs[0]->grad;
    for (std::size_t i = 0; i < block; ++i) gi[index * block + i] += self.grad[i];
  });
}

Tensor stack_first(const std::vector<Tensor>& parts) {
  require_shape(!parts.empty(), "stack_first", "nothing to stack");
  const Shape& s0 = parts.front().shape();
  for (const auto& p : parts)
    require_shape(p.shape() == s0, "stack_first", shape_str(p.shape()) + " vs " + shape_str(s0));
  const std::size_t block = numel_of(s0);
  std::vector<double> out;
  out.reserve(block * parts.size());
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Shape shape{parts.size()};
  shape.insert(shape.end(), s0.begin(), s0.end());
  return Tensor::make_result("stack_first", std::move(shape), std::move(out), parts, [block](Node& self) {
    for (std::size_t n = 0; n < self.inputs.size(); ++n) {
      Node& in = *self.inputs[n];
      if (!in.requires_grad) continue;
      for (std::size_t i = 0; i < block; ++i) in.grad[i] += self.grad[n * block + i];
    }
  });
}

Tensor upsample_nearest(const Tensor& a, std::size_t fh, std::size_t fw) {
  require_shape(a.rank() == 3 && fh >= 1 && fw >= 1, "upsample_nearest", "needs [h,w,C] and factors >= 1");
  const std::size_t h = a.dim(0), w = a.dim(1), C = a.dim(2);
  const std::size_t H = h * fh, W = w * fw;
  auto x = a.data();
  std::vector<double> out(H * W * C);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t xx = 0; xx < W; ++xx)
      std::copy_n(&x[((y / fh) * w + xx / fw) * C], C, &out[(y * W + xx) * C]);
  return Tensor::make_result("upsample_nearest", {H, W, C}, std::move(out), {a}, [w, C, H, W, fh, fw](Node& self) {
    auto& gi = self.inputs[0]->grad;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t c = 0; c < C; ++c) gi[((y / fh) * w + xx / fw) * C + c] += self.grad[(y * W + xx) * C + c];
  });
}

Tensor avg_pool(const Tensor& a, std::size_t kh, std::size_t kw) {
  require_shape(a.rank() == 3, "avg_pool", "needs [H,W,C]");
  const std::size_t H = a.dim(0), W = a.dim(1), C = a.dim(2);
  require_shape(kh >= 1 && kw >= 1 && H % kh == 0 && W % kw == 0, "avg_pool", "window must divide extents");
  const std::size_t h = H / kh, w = W / kw;
  const double inv = 1.0 / static_cast<double>(kh * kw);
  auto x = a.data();
  std::vector<double> out(h * w * C, 0.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t xx = 0; xx < W; ++xx)
      for (std::size_t c = 0; c < C; ++c) out[((y / kh) * w + xx / kw) * C + c] += x[(y * W + xx) * C + c];
  for (auto& v : out) v *= inv;
  return Tensor::make_result("avg_pool", {h, w, C}, std::move(out), {a}, [H, W, C, w, kh, kw, inv](Node& self) {
    auto& gi = self.inputs[0]->grad;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t c = 0; c < C; ++c) gi[(y * W + xx) * C + c] += inv * self.grad[((y / kh) * w + xx / kw) * C + c];
  });
}

Tensor scatter_max(const Tensor& src, std::span<const std::size_t> segment, std::size_t segments) {
  require_shape(src.rank() == 2 && segment.size() == src.dim(0), "scatter_max", "src must be [P,C] with P segment ids");
  const std::size_t P = src.dim(0), C = src.dim(1);
  auto x = src.data();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> arg(segments * C, kNone);
  std::vector<double> out(segments * C, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    const std::size_t s = segment[p];
    if (s >= segments) throw DimensionError("scatter_max: segment id out of range");
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t o = s * C + c;
      if (arg[o] == kNone || x[p * C + c] > out[o]) {
        out[o] = x[p * C + c];
        arg[o] = p;
      }
    }
  }
  if (branch_tracking()) {
    for (auto a : arg) fold_branch(a);
  }
  return Tensor::make_result("scatter_max", {segments, C}, std::move(out), {src}, [C, arg = std::move(arg)](Node& self) {
    auto& gi = self.inputs[0]->grad;
    for (std::size_t o = 0; o < arg.size(); ++o) {
      if (arg[o] != kNone) gi[arg[o] * C + o % C] += self.grad[o];
    }
  });
}

Tensor deform_sample(const Tensor& value, const Tensor& offsets, const Tensor& weights, std::size_t heads,
                     std::size_t points) {
  require_shape(value.rank() == 3, "deform_sample", "value must be [A,B,C]");
  kernels::DeformGeometry g;
  g.rows = value.dim(0);
  g.cols = value.dim(1);
  g.channels = value.dim(2);
  g.heads = heads;
  g.points = points;
  require_shape(heads >= 1 && points >= 1 && g.channels % heads == 0, "deform_sample", "channels must divide by heads");
  require_shape(offsets.shape() == Shape{g.queries(), heads * points * 2}, "deform_sample",
                "offsets shape " + shape_str(offsets.shape()));
  require_shape(weights.shape() == Shape{g.queries(), heads * points}, "deform_sample",
                "weights shape " + shape_str(weights.shape()));
  if (branch_tracking()) {
    auto off = offsets.data();
    for (std::size_t q = 0; q < g.queries(); ++q) {
      for (std::size_t lk = 0; lk < heads * points; ++lk) {
        const auto t = kernels::bilinear_tap(static_cast<double>(q / g.cols) + off[(q * heads * points + lk) * 2],
                                             static_cast<double>(q % g.cols) + off[(q * heads * points + lk) * 2 + 1]);
        fold_branch(static_cast<std::uint64_t>(t.r0) * 1000003ULL + static_cast<std::uint64_t>(t.c0));
      }
    }
  }
  std::vector<double> out(g.queries() * g.channels);
  kernels::parallel::deform_forward(g, value.data(), offsets.data(), weights.data(), out);
  return Tensor::make_result("deform_sample", {g.queries(), g.channels}, std::move(out), {value, offsets, weights},
                             [g](Node& self) {
                               Node& v = *self.inputs[0];
                               Node& o = *self.inputs[1];
                               Node& w = *self.inputs[2];
                               kernels::parallel::deform_backward(g, v.data, o.data, w.data, self.grad, grad_if(v),
                                                                  grad_if(o), grad_if(w));
                             });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result("sum", {}, {s}, {a}, [](Node& self) {
    auto& gi = self.inputs[0]->grad;
    for (auto& g : gi) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require_shape(a.numel() > 0, "mean", "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor focal_loss(const Tensor& prob, const Tensor& target, const FocalOptions& opt) {
  require_shape(prob.numel() == target.numel(), "focal_loss", shape_str(prob.shape()) + " vs " + shape_str(target.shape()));
  auto p = prob.data();
  auto y = target.data();
  const std::size_t n = p.size();
  std::size_t positives = 0;
  for (double v : y) positives += (v == 1.0);
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, positives));
  const double lo = opt.clamp, hi = 1.0 - opt.clamp;
  double total = 0.0;
  std::vector<bool> clamped(n);
  for (std::size_t i = 0; i < n; ++i) {
    clamped[i] = p[i] < lo || p[i] > hi;
    const double q = std::clamp(p[i], lo, hi);
    if (y[i] == 1.0) {
      total -= std::pow(1.0 - q, opt.alpha) * std::log(q);
    } else {
      total -= std::pow(1.0 - y[i], opt.beta) * std::pow(q, opt.alpha) * std::log(1.0 - q);
    }
  }
  fold_mask(clamped);
  return Tensor::make_result(
      "focal_loss", {}, {total * norm}, {prob, target},
      [opt, norm, lo, hi, clamped = std::move(clamped)](Node& self) {
        Node& pn = *self.inputs[0];
        if (!pn.requires_grad) return;
        const auto& yv = self.inputs[1]->data;
        const double g = self.grad[0] * norm;
        for (std::size_t i = 0; i < pn.data.size(); ++i) {
          if (clamped[i]) continue;
          const double q = std::clamp(pn.data[i], lo, hi);
          double d;
          if (yv[i] == 1.0) {
            // d/dq [-(1-q)^a log q]
            d = opt.alpha * std::pow(1.0 - q, opt.alpha - 1.0) * std::log(q) - std::pow(1.0 - q, opt.alpha) / q;
          } else {
            // d/dq [-(1-y)^b q^a log(1-q)]
            const double w = std::pow(1.0 - yv[i], opt.beta);
            d = -w * (opt.alpha * std::pow(q, opt.alpha - 1.0) * std::log(1.0 - q) -
                      std::pow(q, opt.alpha) / (1.0 - q));
          }
          pn.grad[i] += g * d;
        }
      });
}

Tensor masked_l1(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  require_shape(pred.shape() == target.shape() && pred.rank() == 3, "masked_l1", "pred/target must match [H,W,C]");
  require_shape(mask.numel() == pred.dim(0) * pred.dim(1), "masked_l1", "mask must be [H,W]");
  const std::size_t C = pred.dim(2);
  const std::size_t cells = pred.dim(0) * pred.dim(1);
  auto p = pred.data(), t = target.data(), m = mask.data();
  std::size_t count = 0;
  double total = 0.0;
  std::vector<bool> sign(cells * C, false);
  for (std::size_t i = 0; i < cells; ++i) {
    if (m[i] == 0.0) continue;
    ++count;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = p[i * C + c] - t[i * C + c];
      sign[i * C + c] = d > 0.0;
      total += std::abs(d);
    }
  }
  fold_mask(sign);
  const double norm = count ? 1.0 / static_cast<double>(count) : 0.0;
  std::vector<double> mask_copy(m.begin(), m.end());
  return Tensor::make_result("masked_l1", {}, {total * norm}, {pred, target},
                             [norm, cells, C, mask_copy = std::move(mask_copy)](Node& self) {
                               Node& pn = *self.inputs[0];
                               Node& tn = *self.inputs[1];
                               const double g = self.grad[0] * norm;
                               for (std::size_t i = 0; i < cells; ++i) {
                                 if (mask_copy[i] == 0.0) continue;
                                 for (std::size_t c = 0; c < C; ++c) {
                                   const std::size_t k = i * C + c;
                                   const double d = pn.data[k] - tn.data[k];
                                   const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                                   if (pn.requires_grad) pn.grad[k] += g * s;
                                   if (tn.requires_grad) tn.grad[k] -= g * s;
                                 }
                               }
                             });
}

}  // namespace sttrack::num
