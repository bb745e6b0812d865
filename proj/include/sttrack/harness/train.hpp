#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sttrack/harness/config.hpp"
#include "sttrack/head/head.hpp"
#include "sttrack/numerics/params.hpp"

namespace sttrack::harness {

struct TrainResult {
  num::ParameterSet params;
  std::vector<double> losses;  // mean total loss per step
};

using TrainProgress = std::function<void(std::size_t step, const head::LossTerms& terms)>;

// Fresh parameters for the pipeline, seeded by train.seed.
num::ParameterSet initial_params(const RunConfig& cfg);

// Perturbation of one history box, standing in for tracking error.
struct BoxNoise {
  double x = 0.0, y = 0.0, z = 0.0, theta = 0.0;
};

// One training sample: frame t of seq. history[a - 1] perturbs the box at age
// a (missing entries are zero); the search reference is the perturbed box at
// age 1, as it is when tracking.
head::LossTerms sample_loss(const Sequence& seq, std::size_t t, std::span<const BoxNoise> history,
                            const num::ParameterSet& params, const track::PipelineConfig& cfg);

// Learning rate at `step` under the cosine schedule.
double learning_rate(const TrainConfig& train, std::size_t step);

// SGD with momentum over seeded random samples from generated sequences.
// Throws NumericError if the loss becomes non-finite.
TrainResult train_toy(const RunConfig& cfg, const SceneSpec& spec, const TrainProgress& progress = {});

}  // namespace sttrack::harness
