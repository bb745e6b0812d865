#include "sttrack/tracker/tracker.hpp"

#include <algorithm>
#include <charconv>

namespace sttrack::track {

void FramePattern::validate() const {
  if (ages.empty() || ages.front() != 0) throw ConfigError("pattern must start with age 0");
  for (std::size_t k = 1; k < ages.size(); ++k) {
    if (ages[k] <= ages[k - 1]) throw ConfigError("pattern ages must be strictly ascending");
  }
}

std::string FramePattern::str() const {
  std::string s;
  for (std::size_t k = 0; k < ages.size(); ++k) s += (k ? "," : "") + std::to_string(ages[k]);
  return s;
}

FramePattern FramePattern::parse(std::string_view text) {
  FramePattern p;
  p.ages.clear();
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    auto item = text.substr(pos, end - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size()) {
      throw ConfigError("pattern: cannot parse '" + std::string(text) + "'");
    }
    p.ages.push_back(v);
    pos = end + 1;
  }
  p.validate();
  return p;
}

const std::vector<FramePattern>& ablation_patterns() {
  static const std::vector<FramePattern> kPatterns{
      {{0, 1}},       {{0, 2}},       {{0, 1, 2}},          {{0, 1, 2, 3}},         {{0, 1, 3, 5}},
      {{0, 2, 3, 4}}, {{0, 2, 4, 6}}, {{0, 1, 2, 3, 4}}, {{0, 1, 2, 3, 4, 5}},
  };
  return kPatterns;
}

void PipelineConfig::validate() const {
  grid.validate();
  pattern.validate();
  stlm.validate(grid);
  if (pillars.feature_channels != stlm.c1 || head.in_channels != stlm.c1) {
    throw ConfigError("pipeline: backbone, stlm and head channel counts must agree");
  }
}

void init_model(num::ParameterSet& params, const PipelineConfig& cfg) {
  cfg.validate();
  pillars::init_params(params, cfg.pillars, cfg.grid);
  stlm::init_params(params, cfg.stlm, cfg.grid);
  head::init_params(params, cfg.head);
}

geom::TimedPointCloud crop_to_grid(const geom::TimedPointCloud& cloud, const geom::GridConfig& grid) {
  geom::TimedPointCloud out;
  const double x_max = grid.x_max(), y_max = grid.y_max();
  for (const auto& p : cloud.points) {
    if (p.x >= grid.x_min && p.x < x_max && p.y >= grid.y_min && p.y < y_max && p.z >= grid.z_min &&
        p.z <= grid.z_max) {
      out.points.push_back(p);
    }
  }
  return out;
}

head::HeadOutput forward_local(const std::vector<geom::TimedPointCloud>& frames,
                               const std::vector<Box3D>& past_boxes, const num::ParameterSet& params,
                               const PipelineConfig& cfg) {
  std::vector<pillars::FeatureMap> features;
  features.reserve(frames.size());
  for (const auto& f : frames) features.push_back(pillars::encode_frame(f, cfg.grid, params));
  // encode_frame reads the age from the first point; empty frames need it set.
  for (std::size_t n = 0; n < frames.size(); ++n) {
    features[n].frame_age = static_cast<double>(cfg.pattern.ages[frames.size() - 1 - n]);
  }
  const auto u = stlm::stlm_forward(features, past_boxes, params, cfg.stlm);
  return head::head_forward(u.values, params);
}

LocalSample build_local_sample(const std::function<const RawCloud&(std::size_t age)>& cloud_at,
                               const std::function<Box3D(std::size_t age)>& box_at, const Box3D& reference,
                               const PipelineConfig& cfg) {
  LocalSample s;
  const auto& ages = cfg.pattern.ages;
  for (auto it = ages.rbegin(); it != ages.rend(); ++it) {
    const auto age = *it;
    auto stamped = pillars::stamp_time(cloud_at(age), static_cast<double>(age));
    s.frames.push_back(crop_to_grid(geom::to_local(stamped, reference), cfg.grid));
    if (age != 0) s.past_boxes.push_back(geom::to_local(box_at(age), reference));
  }
  s.current_points = s.frames.back().size();
  return s;
}

TrackState init(const RawCloud& first_cloud, const Box3D& gt_box, const num::ParameterSet& params,
                const PipelineConfig& cfg) {
  cfg.validate();
  if (!gt_box.valid()) throw ConfigError("init: invalid ground-truth box");
  TrackState s;
  s.config = cfg;
  s.params = &params;
  s.known_size = head::BoxSize::of(gt_box);
  const std::size_t depth = std::max<std::size_t>(1, cfg.pattern.max_age());
  s.frames.assign(depth, first_cloud);
  s.frame_ids.assign(depth, 0);
  s.boxes.assign(depth, gt_box);
  return s;
}

StepResult step(TrackState& state, const RawCloud& cloud) {
  if (state.params == nullptr || state.boxes.empty()) throw ContractError("step: state not initialised");
  const auto& cfg = state.config;
  const Box3D reference = state.boxes.front();
  ++state.frame_index;

  auto cloud_at = [&](std::size_t age) -> const RawCloud& { return age == 0 ? cloud : state.frames[age - 1]; };
  auto box_at = [&](std::size_t age) { return state.boxes[age - 1]; };
  StepResult r;
  if (state.override_box) {
    r.prediction.box = state.override_box(state.frame_index);
    r.prediction.score = 1.0;
  } else {
    const auto sample = build_local_sample(cloud_at, box_at, reference, cfg);
    if (sample.current_points == 0) {
      r.prediction.box = reference;
      r.coasted = true;
    } else {
      num::NoGradGuard no_grad;
      const auto out = forward_local(sample.frames, sample.past_boxes, *state.params, cfg);
      r.prediction = head::decode(out, cfg.grid, state.known_size);
      r.heatmap = out.heatmap;
      r.prediction.box = geom::to_world(r.prediction.box, reference);
    }
  }

  state.frames.push_front(cloud);
  state.frame_ids.push_front(state.frame_index);
  state.boxes.push_front(r.prediction.box);
  state.frames.pop_back();
  state.frame_ids.pop_back();
  state.boxes.pop_back();
  return r;
}

std::vector<Box3D> run_sequence(const std::vector<RawCloud>& clouds, const GroundTruthAccessor& gt,
                                const num::ParameterSet& params, const PipelineConfig& cfg,
                                const RunOptions& options) {
  if (clouds.empty()) throw ContractError("run_sequence: no frames");
  const Box3D first = gt(0);
  auto state = init(clouds.front(), first, params, cfg);
  state.override_box = options.override_box;
  std::vector<Box3D> out{first};
  for (std::size_t k = 1; k < clouds.size(); ++k) {
    const auto r = step(state, clouds[k]);
    out.push_back(r.prediction.box);
    if (options.on_step) options.on_step(k, r);
  }
  return out;
}

std::vector<Box3D> run_sequence(const std::vector<RawCloud>& clouds, const Box3D& gt_first,
                                const num::ParameterSet& params, const PipelineConfig& cfg) {
  return run_sequence(clouds, [&](std::size_t) { return gt_first; }, params, cfg);
}

}  // namespace sttrack::track
