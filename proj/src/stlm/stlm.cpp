#include "sttrack/stlm/stlm.hpp"

#include <algorithm>
#include <cmath>

#include "sttrack/numerics/ops.hpp"

namespace sttrack::stlm {

namespace {

thread_local std::size_t t_mask_fusions = 0;

using num::Tensor;

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kDot: return "dot";
    case Variant::kNoMask: return "no_mask";
    case Variant::kNoBoxConv: return "no_boxconv";
    case Variant::kConvPatch: return "conv_patch";
    case Variant::kDense: return "dense";
    case Variant::kPosEmbed: return "pos_embed";
  }
  return "full";
}

Variant parse_variant(std::string_view name) {
  for (auto v : all_variants()) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("stlm.variant: unknown value '" + std::string(name) + "'");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> kAll{Variant::kFull,      Variant::kDot,   Variant::kNoMask,  Variant::kNoBoxConv,
                                         Variant::kConvPatch, Variant::kDense, Variant::kPosEmbed};
  return kAll;
}

void StlmConfig::validate(const geom::GridConfig& grid) const {
  if (c2 != c1) throw ConfigError("stlm: C2 must equal C1 (the current frame enters PatchConv without BoxConv)");
  if (patch_r == 0 || grid.W % patch_r != 0 || grid.H % patch_r != 0) {
    throw ConfigError("stlm.patch_r must divide the feature map extents");
  }
  if (heads == 0 || samples == 0) throw ConfigError("stlm: heads and samples must be >= 1");
  if (c3 % heads != 0) throw ConfigError("stlm: C3 must be divisible by the head count");
  if (variant == Variant::kPosEmbed && c3 % 4 != 0) throw ConfigError("stlm: pos_embed needs C3 divisible by 4");
}

void init_params(num::ParameterSet& params, const StlmConfig& cfg, const geom::GridConfig& grid) {
  cfg.validate(grid);
  const auto c1 = cfg.c1, c2 = cfg.c2, c3 = cfg.c3, c4 = cfg.c4;
  params.uniform("stlm.maskconv.w", {3, 3, 1, c1}, 9);
  params.uniform("stlm.maskconv.b", {c1}, 9);
  params.uniform("stlm.boxconv.w", {3, 3, c1, c2}, 9 * c1);
  params.uniform("stlm.boxconv.b", {c2}, 9 * c1);
  if (cfg.variant == Variant::kConvPatch) {
    params.uniform("stlm.patchconv.w", {3, 3, c2, c3}, 9 * c2);
    params.uniform("stlm.patchconv.b", {c3}, 9 * c2);
  } else {
    const std::size_t ph = grid.H / cfg.patch_r, pw = grid.W / cfg.patch_r;
    params.uniform("stlm.patchconv.w", {ph, pw, c2, c3}, ph * pw * c2);
    params.uniform("stlm.patchconv.b", {c3}, ph * pw * c2);
  }
  params.uniform("stlm.lift.w", {c3, c4}, c3);
  params.uniform("stlm.lift.b", {c4}, c3);
  params.uniform("stlm.fuse.w", {3, 3, c4 + c1, c1}, 9 * (c4 + c1));
  params.uniform("stlm.fuse.b", {c1}, 9 * (c4 + c1));
  const auto lk = cfg.heads * cfg.samples;
  if (cfg.variant == Variant::kDense) {
    for (const char* n : {"query", "key", "value", "out"}) {
      params.uniform(std::string("stlm.attn.") + n + ".w", {c3, c3}, c3);
      params.uniform(std::string("stlm.attn.") + n + ".b", {c3}, c3);
    }
  } else {
    // Head l starts sampling along direction 2*pi*l/L (row = time, col =
    // space) at distances 1..K, so every row of the grid is reachable.
    params.uniform("stlm.attn.offset.w", {c3, lk * 2}, c3);
    auto bias = params.constant("stlm.attn.offset.b", {lk * 2}, 0.0).mutable_data();
    for (std::size_t l = 0; l < cfg.heads; ++l) {
      const double a = 2.0 * M_PI * static_cast<double>(l) / static_cast<double>(cfg.heads);
      const double dr = std::sin(a), dc = std::cos(a);
      const double norm = std::max(std::abs(dr), std::abs(dc));
      for (std::size_t k = 0; k < cfg.samples; ++k) {
        bias[(l * cfg.samples + k) * 2] = dr / norm * static_cast<double>(k + 1);
        bias[(l * cfg.samples + k) * 2 + 1] = dc / norm * static_cast<double>(k + 1);
      }
    }
    params.uniform("stlm.attn.weight.w", {c3, lk}, c3);
    params.uniform("stlm.attn.weight.b", {lk}, c3);
    params.uniform("stlm.attn.value.w", {c3, c3}, c3);
    params.uniform("stlm.attn.value.b", {c3}, c3);
    params.uniform("stlm.attn.out.w", {c3, c3}, c3);
    params.uniform("stlm.attn.out.b", {c3}, c3);
  }
}

Tensor mask_fusion(const Tensor& feature, const Tensor& mask, const num::ParameterSet& params, Variant variant) {
  if (feature.rank() != 3 || mask.rank() != 3 || mask.dim(0) != feature.dim(0) || mask.dim(1) != feature.dim(1) ||
      mask.dim(2) != 1) {
    throw DimensionError("mask_fusion: mask " + num::shape_str(mask.shape()) + " does not match feature " +
                         num::shape_str(feature.shape()));
  }
  ++t_mask_fusions;
  const auto same = num::ConvOptions::same3x3();
  auto box_conv = [&](const Tensor& x) {
    return num::relu(num::conv2d(x, params.at("stlm.boxconv.w"), params.at("stlm.boxconv.b"), same));
  };
  auto mask_conv = [&] { return num::conv2d(mask, params.at("stlm.maskconv.w"), params.at("stlm.maskconv.b"), same); };
  switch (variant) {
    case Variant::kNoMask: return feature;
    case Variant::kDot: return box_conv(num::mul_broadcast_last(feature, mask));
    case Variant::kNoBoxConv: return num::add(mask_conv(), feature);
    default: return box_conv(num::add(mask_conv(), feature));
  }
}

FeatureMap mask_fusion(const FeatureMap& feature, const geom::BoxMask& mask, const num::ParameterSet& params,
                       Variant variant) {
  if (mask.rows != feature.values.dim(0) || mask.cols != feature.values.dim(1)) {
    throw DimensionError("mask_fusion: mask and feature extents differ");
  }
  return FeatureMap{mask_fusion(feature.values, mask.to_tensor(), params, variant), feature.grid, feature.frame_age};
}

PatchTokens patchify(const FeatureMap& feature, const num::ParameterSet& params, std::size_t r, Variant variant) {
  const auto& f = feature.values;
  if (f.rank() != 3) throw DimensionError("patchify: feature must be [H,W,C]");
  const std::size_t h = f.dim(0), w = f.dim(1);
  if (r == 0 || h % r != 0 || w % r != 0) {
    throw ConfigError("patchify: R=" + std::to_string(r) + " does not divide " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
  const std::size_t ph = h / r, pw = w / r;
  Tensor grid;
  if (variant == Variant::kConvPatch) {
    const auto& weight = params.at("stlm.patchconv.w");
    if (weight.dim(0) != 3 || weight.dim(1) != 3) throw ConfigError("patchify: conv_patch expects a 3x3 PatchConv");
    grid = num::avg_pool(num::conv2d(f, weight, params.at("stlm.patchconv.b"), num::ConvOptions::same3x3()), ph, pw);
  } else {
    const auto& weight = params.at("stlm.patchconv.w");
    if (weight.dim(0) != ph || weight.dim(1) != pw) {
      throw ConfigError("patchify: PatchConv kernel " + num::shape_str(weight.shape()) + " does not match patch " +
                        std::to_string(ph) + "x" + std::to_string(pw));
    }
    grid = num::conv2d(f, weight, params.at("stlm.patchconv.b"), num::ConvOptions{ph, pw, 0, 0});
  }
  const std::size_t c3 = grid.dim(2);
  return PatchTokens{num::reshape(grid, {r * r, c3}), r, h, w};
}

SpatioTemporalGrid build_grid(const std::vector<PatchTokens>& tokens, const std::vector<double>& ages) {
  if (tokens.empty()) throw DimensionError("build_grid: no frames");
  if (tokens.size() != ages.size()) throw DimensionError("build_grid: token and age counts differ");
  std::vector<Tensor> rows;
  rows.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (t.tokens.shape() != tokens.front().tokens.shape()) {
      throw DimensionError("build_grid: inconsistent token shapes " + num::shape_str(t.tokens.shape()) + " vs " +
                           num::shape_str(tokens.front().tokens.shape()));
    }
    rows.push_back(t.tokens);
  }
  return SpatioTemporalGrid{num::stack_first(rows), ages};
}

Tensor positional_embedding(std::size_t rows, std::size_t cols, std::size_t channels) {
  const std::size_t half = channels / 2;
  std::vector<double> pe(rows * cols * channels, 0.0);
  auto encode = [&](double pos, double* out) {
    for (std::size_t i = 0; i + 1 < half; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
      out[i] = std::sin(pos * freq);
      out[i + 1] = std::cos(pos * freq);
    }
  };
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t s = 0; s < cols; ++s) {
      double* cell = &pe[(n * cols + s) * channels];
      encode(static_cast<double>(n), cell);
      encode(static_cast<double>(s), cell + half);
    }
  }
  return Tensor::from({rows, cols, channels}, std::move(pe));
}

namespace {

Tensor dense_attention(const Tensor& query_src, const Tensor& value_src, const num::ParameterSet& params,
                       const StlmConfig& cfg) {
  const std::size_t c3 = cfg.c3, heads = cfg.heads, d = c3 / heads;
  auto q = num::linear(query_src, params.at("stlm.attn.query.w"), params.at("stlm.attn.query.b"));
  auto k = num::linear(query_src, params.at("stlm.attn.key.w"), params.at("stlm.attn.key.b"));
  auto v = num::linear(value_src, params.at("stlm.attn.value.w"), params.at("stlm.attn.value.b"));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor merged;
  for (std::size_t l = 0; l < heads; ++l) {
    auto ql = num::slice_last(q, l * d, d);
    auto kl = num::slice_last(k, l * d, d);
    auto vl = num::slice_last(v, l * d, d);
    auto scores = num::scale(num::matmul(ql, num::transpose(kl)), inv_sqrt_d);
    auto head = num::matmul(num::softmax(scores, 1), vl);
    merged = merged.defined() ? num::concat_last(merged, head) : head;
  }
  return num::linear(merged, params.at("stlm.attn.out.w"), params.at("stlm.attn.out.b"));
}

}  // namespace

SpatioTemporalGrid deformable_attend(const SpatioTemporalGrid& grid, const num::ParameterSet& params,
                                     const StlmConfig& cfg) {
  const auto& g = grid.values;
  if (g.rank() != 3 || g.dim(2) != cfg.c3) throw DimensionError("deformable_attend: grid must be [N,S,C3]");
  const std::size_t n = g.dim(0), s = g.dim(1), c3 = g.dim(2);
  const auto flat = num::reshape(g, {n * s, c3});
  Tensor query = flat;
  if (cfg.variant == Variant::kPosEmbed) {
    query = num::add(flat, num::reshape(positional_embedding(n, s, c3), {n * s, c3}));
  }
  Tensor out;
  if (cfg.variant == Variant::kDense) {
    out = dense_attention(query, flat, params, cfg);
  } else {
    const std::size_t heads = cfg.heads, points = cfg.samples;
    auto offsets = num::linear(query, params.at("stlm.attn.offset.w"), params.at("stlm.attn.offset.b"));
    auto logits = num::linear(query, params.at("stlm.attn.weight.w"), params.at("stlm.attn.weight.b"));
    auto weights = num::reshape(num::softmax(num::reshape(logits, {n * s, heads, points}), 2), {n * s, heads * points});
    auto value = num::reshape(num::linear(flat, params.at("stlm.attn.value.w"), params.at("stlm.attn.value.b")),
                              {n, s, c3});
    auto sampled = num::deform_sample(value, offsets, weights, heads, points);
    out = num::linear(sampled, params.at("stlm.attn.out.w"), params.at("stlm.attn.out.b"));
  }
  return SpatioTemporalGrid{num::reshape(out, {n, s, c3}), grid.frame_ages};
}

FeatureMap fuse_current(const SpatioTemporalGrid& attended, const FeatureMap& current, const num::ParameterSet& params,
                        const StlmConfig& cfg) {
  const auto& f = current.values;
  const std::size_t h = f.dim(0), w = f.dim(1);
  const std::size_t r = cfg.patch_r;
  if (attended.tokens() != r * r) throw DimensionError("fuse_current: token count is not R*R");
  if (h % r != 0 || w % r != 0) throw DimensionError("fuse_current: R does not divide the feature map");
  auto row = num::select_first(attended.values, attended.frames() - 1);
  auto lifted = num::linear(row, params.at("stlm.lift.w"), params.at("stlm.lift.b"));
  auto up = num::upsample_nearest(num::reshape(lifted, {r, r, lifted.dim(1)}), h / r, w / r);
  auto u = num::conv2d(num::concat_last(up, f), params.at("stlm.fuse.w"), params.at("stlm.fuse.b"),
                       num::ConvOptions::same3x3());
  return FeatureMap{u, current.grid, current.frame_age};
}

FeatureMap stlm_forward(const std::vector<FeatureMap>& features, const std::vector<geom::Box3D>& boxes,
                        const num::ParameterSet& params, const StlmConfig& cfg) {
  if (features.empty()) throw DimensionError("stlm_forward: no frames");
  if (boxes.size() + 1 != features.size()) {
    throw DimensionError("stlm_forward: " + std::to_string(features.size()) + " frames need " +
                         std::to_string(features.size() - 1) + " past boxes, got " + std::to_string(boxes.size()));
  }
  const auto& grid = features.back().grid;
  cfg.validate(grid);
  std::vector<PatchTokens> tokens;
  std::vector<double> ages;
  tokens.reserve(features.size());
  for (std::size_t i = 0; i + 1 < features.size(); ++i) {
    const auto mask = geom::rasterize_box_mask(boxes[i], features[i].grid);
    tokens.push_back(patchify(mask_fusion(features[i], mask, params, cfg.variant), params, cfg.patch_r, cfg.variant));
    ages.push_back(features[i].frame_age);
  }
  tokens.push_back(patchify(features.back(), params, cfg.patch_r, cfg.variant));
  ages.push_back(features.back().frame_age);
  const auto grid_g = build_grid(tokens, ages);
  const auto attended = deformable_attend(grid_g, params, cfg);
  return fuse_current(attended, features.back(), params, cfg);
}

std::size_t mask_fusion_count() { return t_mask_fusions; }
void reset_mask_fusion_count() { t_mask_fusions = 0; }

}  // namespace sttrack::stlm
