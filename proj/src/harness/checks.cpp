#include "sttrack/harness/checks.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sttrack/harness/train.hpp"
#include "sttrack/numerics/ops.hpp"
#include "sttrack/numerics/random.hpp"

namespace sttrack::harness {

namespace {

using num::Shape;
using num::Tensor;

Tensor random_tensor(num::Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(num::numel_of(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

// Values in [-1, -0.1] u [0.1, 1] so ReLU-like kinks sit well away.
Tensor away_from_zero(num::Rng& rng, Shape shape) {
  std::vector<double> v(num::numel_of(shape));
  for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return Tensor::from(std::move(shape), std::move(v));
}

// sum(t * w) for a fixed random w of the same shape.
Tensor weighted_sum(const Tensor& t, std::uint64_t seed) {
  num::Rng rng(seed);
  return num::sum(num::mul(t, random_tensor(rng, t.shape())));
}

struct CaseBuilder {
  std::vector<GradCase> cases;
  std::uint64_t seed;

  num::ParameterSet& add(const std::string& name, num::ScalarFn fn) {
    cases.push_back(GradCase{name, num::ParameterSet(seed), std::move(fn)});
    return cases.back().params;
  }
  num::Rng rng(const std::string& name) const { return num::Rng(num::derive_seed(seed, name)); }
};

struct GoldenSample {
  track::LocalSample sample;
  head::TargetMaps targets;
};

GoldenSample golden_sample(const RunConfig& cfg, std::uint64_t seed) {
  SceneSpec spec = cfg.scene;
  spec.seed = seed;
  spec.frames = cfg.pipeline.pattern.max_age() + 2;
  const auto seq = generate_sequence(spec);
  const std::size_t t = seq.size() - 1;
  auto back = [&](std::size_t age) { return t >= age ? t - age : 0; };
  Box3D reference = seq.boxes[t - 1];
  reference.x += 0.13;
  reference.y -= 0.07;
  GoldenSample g;
  g.sample = track::build_local_sample([&](std::size_t age) -> const RawCloud& { return seq.clouds[back(age)]; },
                                       [&](std::size_t age) { return seq.boxes[back(age)]; }, reference,
                                       cfg.pipeline);
  g.targets = head::assign_targets(geom::to_local(seq.boxes[t], reference), cfg.pipeline.grid,
                                   head::BoxSize::of(seq.boxes[t]), cfg.pipeline.head.assignment);
  return g;
}

std::uint64_t hash_tensors(std::initializer_list<Tensor> tensors) {
  std::vector<double> all;
  for (const auto& t : tensors) all.insert(all.end(), t.data().begin(), t.data().end());
  return hash_values(all);
}

}  // namespace

std::vector<GradCase> op_grad_cases(std::uint64_t seed) {
  CaseBuilder b{{}, seed};
  const std::uint64_t w = num::derive_seed(seed, "reduce");

  {
    auto r = b.rng("conv2d.same");
    auto& p = b.add("conv2d.same3x3", [w](const num::ParameterSet& ps) {
      return weighted_sum(num::conv2d(ps.at("x"), ps.at("w"), ps.at("b"), num::ConvOptions::same3x3()), w);
    });
    p.insert("x", random_tensor(r, {5, 6, 3}));
    p.insert("w", random_tensor(r, {3, 3, 3, 4}));
    p.insert("b", random_tensor(r, {4}));
  }
  {
    auto r = b.rng("conv2d.strided");
    auto& p = b.add("conv2d.stride2", [w](const num::ParameterSet& ps) {
      return weighted_sum(num::conv2d(ps.at("x"), ps.at("w"), ps.at("b"), num::ConvOptions::strided(2, 1)), w);
    });
    p.insert("x", random_tensor(r, {6, 7, 2}));
    p.insert("w", random_tensor(r, {3, 3, 2, 3}));
    p.insert("b", random_tensor(r, {3}));
  }
  {
    auto r = b.rng("conv2d.patch");
    auto& p = b.add("conv2d.patch", [w](const num::ParameterSet& ps) {
      return weighted_sum(num::conv2d(ps.at("x"), ps.at("w"), Tensor{}, num::ConvOptions{2, 3, 0, 0}), w);
    });
    p.insert("x", random_tensor(r, {4, 6, 2}));
    p.insert("w", random_tensor(r, {2, 3, 2, 3}));
  }
  {
    auto r = b.rng("linear");
    auto& p = b.add("linear", [w](const num::ParameterSet& ps) {
      return weighted_sum(num::linear(ps.at("x"), ps.at("w"), ps.at("b")), w);
    });
    p.insert("x", random_tensor(r, {5, 4}));
    p.insert("w", random_tensor(r, {4, 3}));
    p.insert("b", random_tensor(r, {3}));
  }
  {
    auto r = b.rng("matmul");
    auto& p = b.add("matmul", [w](const num::ParameterSet& ps) {
      return weighted_sum(num::matmul(ps.at("a"), num::transpose(ps.at("b"))), w);
    });
    p.insert("a", random_tensor(r, {3, 4}));
    p.insert("b", random_tensor(r, {2, 4}));
  }
  {
    auto r = b.rng("bilinear");
    auto& p = b.add("bilinear_sample", [w](const num::ParameterSet& ps) {
      return weighted_sum(num::bilinear_sample(ps.at("grid"), ps.at("loc")), w);
    });
    p.insert("grid", random_tensor(r, {4, 5, 3}));
    // Includes locations partly outside the grid (zero padding).
    p.insert("loc", random_tensor(r, {7, 2}, -0.7, 4.6));
  }
  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto r = b.rng("softmax" + std::to_string(axis));
    auto& p = b.add("softmax.axis" + std::to_string(axis), [w, axis](const num::ParameterSet& ps) {
      return weighted_sum(num::softmax(ps.at("x"), axis), w);
    });
    p.insert("x", random_tensor(r, {2, 3, 4}, -2.0, 2.0));
  }
  {
    auto r = b.rng("elementwise");
    auto& p = b.add("add.mul.scale", [w](const num::ParameterSet& ps) {
      return weighted_sum(num::scale(num::add(num::mul(ps.at("a"), ps.at("b")), ps.at("a")), -1.7), w);
    });
    p.insert("a", random_tensor(r, {3, 4, 2}));
    p.insert("b", random_tensor(r, {3, 4, 2}));
  }
  {
    auto r = b.rng("broadcast");
    auto& p = b.add("mul_broadcast_last", [w](const num::ParameterSet& ps) {
      return weighted_sum(num::mul_broadcast_last(ps.at("a"), ps.at("m")), w);
    });
    p.insert("a", random_tensor(r, {3, 4, 2}));
    p.insert("m", random_tensor(r, {3, 4, 1}));
  }
  {
    auto r = b.rng("relu");
    auto& p = b.add("relu", [w](const num::ParameterSet& ps) { return weighted_sum(num::relu(ps.at("x")), w); });
    p.insert("x", away_from_zero(r, {4, 5}));
  }
  {
    auto r = b.rng("sigmoid");
    auto& p =
        b.add("sigmoid", [w](const num::ParameterSet& ps) { return weighted_sum(num::sigmoid(ps.at("x")), w); });
    p.insert("x", random_tensor(r, {4, 5}, -3.0, 3.0));
  }
  {
    auto r = b.rng("layout");
    auto& p = b.add("reshape.concat.slice", [w](const num::ParameterSet& ps) {
      auto c = num::concat_last(ps.at("a"), ps.at("b"));
      auto s = num::slice_last(num::reshape(c, {3, 2, 5}), 1, 3);
      return weighted_sum(s, w);
    });
    p.insert("a", random_tensor(r, {3, 2, 2}));
    p.insert("b", random_tensor(r, {3, 2, 3}));
  }
  {
    auto r = b.rng("stack");
    auto& p = b.add("stack_first.select_first", [w](const num::ParameterSet& ps) {
      auto st = num::stack_first({ps.at("a"), ps.at("b"), ps.at("a")});
      return num::add(weighted_sum(st, w), weighted_sum(num::select_first(st, 1), w + 1));
    });
    p.insert("a", random_tensor(r, {2, 3}));
    p.insert("b", random_tensor(r, {2, 3}));
  }
  {
    auto r = b.rng("resample");
    auto& p = b.add("upsample_nearest.avg_pool", [w](const num::ParameterSet& ps) {
      return num::add(weighted_sum(num::upsample_nearest(ps.at("a"), 2, 3), w),
                      weighted_sum(num::avg_pool(ps.at("b"), 2, 3), w + 1));
    });
    p.insert("a", random_tensor(r, {2, 3, 2}));
    p.insert("b", random_tensor(r, {4, 6, 2}));
  }
  {
    auto r = b.rng("scatter");
    static const std::vector<std::size_t> kSegments{0, 2, 2, 0, 3, 2, 0, 3};
    auto& p = b.add("scatter_max", [w](const num::ParameterSet& ps) {
      return weighted_sum(num::scatter_max(ps.at("x"), kSegments, 5), w);
    });
    p.insert("x", random_tensor(r, {8, 3}));
  }
  {
    auto r = b.rng("deform");
    auto& p = b.add("deform_sample", [w](const num::ParameterSet& ps) {
      return weighted_sum(num::deform_sample(ps.at("value"), ps.at("offsets"), ps.at("weights"), 2, 2), w);
    });
    p.insert("value", random_tensor(r, {3, 4, 4}));
    p.insert("offsets", random_tensor(r, {12, 8}, -1.6, 1.6));
    p.insert("weights", random_tensor(r, {12, 4}, 0.0, 1.0));
  }
  {
    auto r = b.rng("reduce");
    auto& p = b.add("sum.mean", [](const num::ParameterSet& ps) {
      return num::add(num::sum(ps.at("x")), num::scale(num::mean(num::mul(ps.at("x"), ps.at("x"))), 3.0));
    });
    p.insert("x", random_tensor(r, {3, 4}));
  }
  {
    auto r = b.rng("focal");
    std::vector<double> target(16, 0.0);
    target[5] = target[6] = 1.0;
    target[9] = 0.6;
    target[10] = 0.3;
    auto t = Tensor::from({4, 4, 1}, target);
    auto& p = b.add("focal_loss", [t](const num::ParameterSet& ps) {
      return num::focal_loss(num::sigmoid(ps.at("logits")), t);
    });
    p.insert("logits", random_tensor(r, {4, 4, 1}, -3.0, 3.0));
  }
  {
    auto r = b.rng("l1");
    auto target = random_tensor(r, {3, 3, 2});
    std::vector<double> mask(9, 0.0);
    mask[0] = mask[4] = mask[7] = 1.0;
    auto m = Tensor::from({3, 3, 1}, mask);
    auto& p = b.add("masked_l1",
                    [target, m](const num::ParameterSet& ps) { return num::masked_l1(ps.at("pred"), target, m); });
    p.insert("pred", random_tensor(r, {3, 3, 2}));
  }
  return std::move(b.cases);
}

GradCase pipeline_grad_case(const RunConfig& cfg, std::uint64_t seed) {
  auto g = golden_sample(cfg, seed);
  GradCase c{"pipeline." + std::string(stlm::to_string(cfg.pipeline.stlm.variant)) + "." + cfg.pipeline.pattern.str(),
             initial_params(cfg), {}};
  const auto pipeline = cfg.pipeline;
  c.fn = [g = std::move(g), pipeline](const num::ParameterSet& ps) {
    const auto out = track::forward_local(g.sample.frames, g.sample.past_boxes, ps, pipeline);
    return head::loss(out, g.targets, pipeline.head).total;
  };
  return c;
}

RunConfig reduced_config() {
  RunConfig cfg;
  cfg.grid.range = 4.8;
  cfg.grid.pillar = 0.15;
  cfg.grid.stride = 4;
  cfg.pipeline.pillars.pillar_channels = 4;
  cfg.pipeline.pillars.feature_channels = cfg.pipeline.stlm.c1 = cfg.pipeline.stlm.c2 = 8;
  cfg.pipeline.head.in_channels = 8;
  cfg.pipeline.head.hidden = 4;
  cfg.pipeline.stlm.c3 = 8;
  cfg.pipeline.stlm.c4 = 8;
  cfg.pipeline.stlm.patch_r = 4;
  cfg.scene.box_l = 2.0;
  cfg.scene.box_w = 1.0;
  cfg.scene.target_points = 60;
  cfg.scene.clutter_points = 60;
  cfg.finalize();
  return cfg;
}

std::uint64_t hash_values(std::span<const double> values) {
  std::uint64_t h = 1469598103934665603ULL;
  char buf[32];
  for (double v : values) {
    const int n = v == 0.0 ? std::snprintf(buf, sizeof buf, "0;") : std::snprintf(buf, sizeof buf, "%.9e;", v);
    for (int i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string pipeline_golden(const RunConfig& cfg) {
  const auto g = golden_sample(cfg, 3);
  const auto params = initial_params(cfg);
  num::NoGradGuard no_grad;
  const auto out = track::forward_local(g.sample.frames, g.sample.past_boxes, params, cfg.pipeline);
  return hash_hex(hash_tensors({out.heatmap, out.offset, out.height, out.orientation}));
}

std::map<std::string, std::string> compute_goldens() {
  num::NoGradGuard no_grad;
  std::map<std::string, std::string> out;
  RunConfig base;
  base.finalize();
  const auto g = golden_sample(base, 3);
  const auto params = initial_params(base);
  const auto& grid = base.pipeline.grid;

  const auto& current = g.sample.frames.back();
  out["pillars.pillarize"] = hash_hex(hash_tensors({pillars::dynamic_pillarize(current, grid, params)}));
  const auto fmap = pillars::encode_frame(current, grid, params);
  out["pillars.backbone"] = hash_hex(hash_tensors({fmap.values}));

  for (auto v : stlm::all_variants()) {
    RunConfig cfg = base;
    cfg.pipeline.stlm.variant = v;
    cfg.finalize();
    const auto vp = initial_params(cfg);
    std::vector<pillars::FeatureMap> features;
    for (const auto& f : g.sample.frames) features.push_back(pillars::encode_frame(f, grid, vp));
    const auto u = stlm::stlm_forward(features, g.sample.past_boxes, vp, cfg.pipeline.stlm);
    out["stlm." + std::string(stlm::to_string(v))] = hash_hex(hash_tensors({u.values}));
  }

  const auto maps = track::forward_local(g.sample.frames, g.sample.past_boxes, params, base.pipeline);
  out["head.forward"] = hash_hex(hash_tensors({maps.heatmap, maps.offset, maps.height, maps.orientation}));
  const auto terms = head::loss(maps, g.targets, base.pipeline.head);
  out["head.loss"] = hash_hex(hash_tensors({terms.total}));

  for (const auto& pattern : track::ablation_patterns()) {
    RunConfig cfg = base;
    cfg.pipeline.pattern = pattern;
    cfg.finalize();
    out["pattern." + pattern.str()] = pipeline_golden(cfg);
  }

  SceneSpec spec = base.scene;
  spec.seed = 21;
  spec.frames = 5;
  const auto seq = generate_sequence(spec);
  const auto boxes = track::run_sequence(seq.clouds, seq.boxes.front(), params, base.pipeline);
  std::vector<double> flat;
  for (const auto& bx : boxes) flat.insert(flat.end(), {bx.x, bx.y, bx.z, bx.w, bx.l, bx.h, bx.theta});
  out["tracker.run_sequence"] = hash_hex(hash_values(flat));
  return out;
}

void write_goldens(const std::filesystem::path& path, const std::map<std::string, std::string>& goldens) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  for (const auto& [name, hash] : goldens) os << name << ' ' << hash << '\n';
}

std::map<std::string, std::string> read_goldens(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read " + path.string());
  std::map<std::string, std::string> out;
  std::string name, hash;
  while (is >> name >> hash) out[name] = hash;
  return out;
}

}  // namespace sttrack::harness
