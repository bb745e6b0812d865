// Independent reference implementations shared by unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "sttrack/geometry/box.hpp"
#include "sttrack/numerics/params.hpp"

namespace oracles {

using sttrack::geom::Box3D;

// Independent inside test: rotate the point into the box frame.
inline bool inside_oracle(const Box3D& b, double x, double y, double z) {
  const double dx = x - b.x, dy = y - b.y;
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double u = c * dx + s * dy, v = -s * dx + c * dy;
  return std::abs(u) <= b.l / 2 && std::abs(v) <= b.w / 2 && std::abs(z - b.z) <= b.h / 2;
}

// Monte-Carlo IoU over the union's bounding cube; bev ignores z.
inline double mc_iou(const Box3D& a, const Box3D& b, std::size_t samples, std::mt19937_64& rng, bool bev = false) {
  const double ra = std::hypot(a.l, a.w) / 2, rb = std::hypot(b.l, b.w) / 2;
  const double x0 = std::min(a.x - ra, b.x - rb), x1 = std::max(a.x + ra, b.x + rb);
  const double y0 = std::min(a.y - ra, b.y - rb), y1 = std::max(a.y + ra, b.y + rb);
  const double z0 = std::min(a.z - a.h / 2, b.z - b.h / 2), z1 = std::max(a.z + a.h / 2, b.z + b.h / 2);
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1), uz(z0, z1);
  std::size_t both = 0, any = 0;
  for (std::size_t n = 0; n < samples; ++n) {
    const double x = ux(rng), y = uy(rng), z = uz(rng);
    const bool ia = inside_oracle(a, x, y, bev ? a.z : z), ib = inside_oracle(b, x, y, bev ? b.z : z);
    both += ia && ib;
    any += ia || ib;
  }
  return any ? double(both) / double(any) : 0.0;
}

// Straight-line evaluation of the deformable attention equations for one
// grid: offsets and scores from two affine maps of each token, softmax over
// the K samples of a head, bilinear reads of the head's value slice, then
// per-head output blocks summed.
inline std::vector<double> attention_oracle(const std::vector<double>& G, std::size_t N, std::size_t S, std::size_t C,
                                     std::size_t L, std::size_t K, const sttrack::num::ParameterSet& p) {
  auto affine = [&](const std::string& name, const double* x, std::size_t out) {
    const auto& w = p.at(name + ".w");
    const auto& b = p.at(name + ".b");
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < C; ++i) s += x[i] * w[i * out + o];
      y[o] = s;
    }
    return y;
  };
  std::vector<double> V(N * S * C);
  for (std::size_t t = 0; t < N * S; ++t) {
    auto v = affine("stlm.attn.value", &G[t * C], C);
    std::copy(v.begin(), v.end(), V.begin() + t * C);
  }
  auto read = [&](long n, long s, std::size_t c) {
    if (n < 0 || s < 0 || n >= long(N) || s >= long(S)) return 0.0;
    return V[(n * S + s) * C + c];
  };
  const std::size_t d = C / L;
  const auto& wo = p.at("stlm.attn.out.w");
  const auto& bo = p.at("stlm.attn.out.b");
  std::vector<double> out(N * S * C);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t s = 0; s < S; ++s) {
      const double* g = &G[(n * S + s) * C];
      auto dg = affine("stlm.attn.offset", g, L * K * 2);
      auto a = affine("stlm.attn.weight", g, L * K);
      std::vector<double> y(C);
      for (std::size_t o = 0; o < C; ++o) y[o] = bo[o];
      for (std::size_t l = 0; l < L; ++l) {
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(a[l * K + k]);
        std::vector<double> head(d, 0.0);
        for (std::size_t k = 0; k < K; ++k) {
          const double A = std::exp(a[l * K + k]) / z;
          const double r = double(n) + dg[(l * K + k) * 2], q = double(s) + dg[(l * K + k) * 2 + 1];
          const double r0 = std::floor(r), q0 = std::floor(q), fr = r - r0, fq = q - q0;
          for (std::size_t c = 0; c < d; ++c) {
            const std::size_t ch = l * d + c;
            const double v = (1 - fr) * (1 - fq) * read(long(r0), long(q0), ch) +
                             (1 - fr) * fq * read(long(r0), long(q0) + 1, ch) +
                             fr * (1 - fq) * read(long(r0) + 1, long(q0), ch) +
                             fr * fq * read(long(r0) + 1, long(q0) + 1, ch);
            head[c] += A * v;
          }
        }
        // W_l is rows [l*d, (l+1)*d) of the output matrix.
        for (std::size_t o = 0; o < C; ++o)
          for (std::size_t c = 0; c < d; ++c) y[o] += head[c] * wo[(l * d + c) * C + o];
      }
      std::copy(y.begin(), y.end(), out.begin() + (n * S + s) * C);
    }
  return out;
}

// Area under s(tau) = frac(x > tau) on [0, 1] (or frac(x < tau) on [0, 2]),
// sampled on n uniform thresholds with the trapezoid rule.
inline double curve_area(const std::vector<double>& xs, std::size_t n, bool above, double hi) {
  auto frac = [&](double tau, bool last) {
    std::size_t c = 0;
    for (double x : xs) {
      if (above) c += last ? x >= tau : x > tau;
      else c += (tau == 0.0) ? x <= tau : x < tau;
    }
    return double(c) / double(xs.size());
  };
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double t0 = hi * double(k) / double(n - 1), t1 = hi * double(k + 1) / double(n - 1);
    area += 0.5 * (frac(t0, false) + frac(t1, k + 2 == n)) * (t1 - t0);
  }
  return 100.0 * area / hi;
}

}  // namespace oracles
