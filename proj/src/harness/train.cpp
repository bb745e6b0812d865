#include "sttrack/harness/train.hpp"

#include <cmath>
#include <map>
#include <string>

#include "sttrack/numerics/random.hpp"

namespace sttrack::harness {

num::ParameterSet initial_params(const RunConfig& cfg) {
  num::ParameterSet params(cfg.train.seed);
  track::init_model(params, cfg.pipeline);
  return params;
}

head::LossTerms sample_loss(const Sequence& seq, std::size_t t, std::span<const BoxNoise> history,
                            const num::ParameterSet& params, const track::PipelineConfig& cfg) {
  if (t >= seq.size()) throw ContractError("sample_loss: frame out of range");
  auto back = [&](std::size_t age) { return t >= age ? t - age : 0; };
  auto past = [&](std::size_t age) {
    Box3D b = seq.boxes[back(age)];
    if (age >= 1 && age <= history.size()) {
      const auto& n = history[age - 1];
      b.x += n.x;
      b.y += n.y;
      b.z += n.z;
      b.theta = geom::normalize_angle(b.theta + n.theta);
    }
    return b;
  };
  const Box3D reference = past(1);
  const auto sample = track::build_local_sample([&](std::size_t age) -> const RawCloud& { return seq.clouds[back(age)]; },
                                                past, reference, cfg);
  const auto gt = seq.boxes[t];
  const auto targets =
      head::assign_targets(geom::to_local(gt, reference), cfg.grid, head::BoxSize::of(gt), cfg.head.assignment);
  const auto out = track::forward_local(sample.frames, sample.past_boxes, params, cfg);
  return head::loss(out, targets, cfg.head);
}

double learning_rate(const TrainConfig& train, std::size_t step) {
  if (train.steps <= 1 || train.lr_final >= 1.0) return train.lr;
  const double progress = static_cast<double>(step) / static_cast<double>(train.steps - 1);
  return train.lr * (train.lr_final + (1.0 - train.lr_final) * 0.5 * (1.0 + std::cos(M_PI * progress)));
}

TrainResult train_toy(const RunConfig& cfg, const SceneSpec& spec, const TrainProgress& progress) {
  RunConfig run = cfg;
  run.finalize();
  TrainResult result{initial_params(run), {}};
  if (run.train.steps == 0) return result;

  std::vector<Sequence> data;
  for (std::size_t s = 0; s < run.train.sequences; ++s) {
    SceneSpec sp = spec;
    sp.seed = num::derive_seed(spec.seed, "train-sequence-" + std::to_string(s));
    data.push_back(generate_sequence(sp));
  }

  num::Rng rng(num::derive_seed(run.train.seed, "train-samples"));
  std::map<std::string, std::vector<double>> velocity;
  for (auto& [name, p] : result.params) velocity[name].assign(p.numel(), 0.0);

  const auto& tc = run.train;
  const double inv_batch = 1.0 / static_cast<double>(tc.batch);
  std::vector<BoxNoise> noise(run.pipeline.pattern.max_age());
  for (std::size_t step = 0; step < tc.steps; ++step) {
    result.params.zero_grad();
    head::LossTerms mean;
    double total = 0.0;
    for (std::size_t b = 0; b < tc.batch; ++b) {
      const auto& seq = data[rng.below(data.size())];
      const std::size_t t = seq.size() > 1 ? 1 + rng.below(seq.size() - 1) : 0;
      for (auto& n : noise) {
        n.x = rng.uniform(-tc.jitter, tc.jitter);
        n.y = rng.uniform(-tc.jitter, tc.jitter);
        n.z = rng.uniform(-tc.jitter_z, tc.jitter_z);
        n.theta = rng.uniform(-tc.jitter_theta, tc.jitter_theta);
      }
      const auto terms = sample_loss(seq, t, noise, result.params, run.pipeline);
      const double value = terms.total.item();
      if (!std::isfinite(value)) throw NumericError("train_toy: non-finite loss at step " + std::to_string(step));
      num::backward(terms.total);
      total += value * inv_batch;
      mean.heatmap += terms.heatmap * inv_batch;
      mean.offset += terms.offset * inv_batch;
      mean.height += terms.height * inv_batch;
      mean.orientation += terms.orientation * inv_batch;
    }
    mean.total = num::Tensor::scalar(total);
    result.losses.push_back(total);
    if (progress) progress(step, mean);

    double scale = inv_batch;
    if (tc.clip > 0) {
      double sq = 0.0;
      for (auto& [name, p] : result.params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
      }
      const double norm = std::sqrt(sq) * inv_batch;
      if (norm > tc.clip) scale *= tc.clip / norm;
    }
    const double lr = learning_rate(tc, step), mu = tc.momentum;
    for (auto& [name, p] : result.params) {
      if (!p.has_grad()) continue;
      auto& v = velocity[name];
      auto g = p.grad();
      auto w = p.mutable_data();
      for (std::size_t k = 0; k < w.size(); ++k) {
        v[k] = mu * v[k] + scale * g[k];
        w[k] -= lr * v[k];
      }
    }
  }
  result.params.zero_grad();
  return result;
}

}  // namespace sttrack::harness
