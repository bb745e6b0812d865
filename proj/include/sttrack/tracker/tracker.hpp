#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sttrack/geometry/box.hpp"
#include "sttrack/geometry/grid.hpp"
#include "sttrack/head/head.hpp"
#include "sttrack/numerics/params.hpp"
#include "sttrack/pillars/pillars.hpp"
#include "sttrack/stlm/stlm.hpp"

namespace sttrack::track {

using geom::Box3D;
using pillars::RawCloud;

// Frame ages fed to the model; always starts with 0 (the current frame).
struct FramePattern {
  std::vector<std::size_t> ages{0, 1, 2, 3};

  void validate() const;
  std::size_t frames() const { return ages.size(); }
  std::size_t max_age() const { return ages.back(); }
  std::string str() const;  // "0,1,2,3"
  static FramePattern parse(std::string_view text);
  bool operator==(const FramePattern&) const = default;
};

// Patterns of the frame-selection ablation.
const std::vector<FramePattern>& ablation_patterns();

struct PipelineConfig {
  geom::GridConfig grid = geom::GridConfig::centered(9.6, 0.15, 4, -3.0, 3.0);
  pillars::PillarConfig pillars{};
  stlm::StlmConfig stlm{};
  head::HeadConfig head{};
  FramePattern pattern{};

  void validate() const;
};

void init_model(num::ParameterSet& params, const PipelineConfig& cfg);

// Points inside the grid's x/y range and z crop.
geom::TimedPointCloud crop_to_grid(const geom::TimedPointCloud& cloud, const geom::GridConfig& grid);

// One sample in the shared local frame. frames are ordered oldest first and
// already time-stamped; past_boxes[n] belongs to frames[n].
head::HeadOutput forward_local(const std::vector<geom::TimedPointCloud>& frames,
                               const std::vector<Box3D>& past_boxes, const num::ParameterSet& params,
                               const PipelineConfig& cfg);

// Crops the pattern's frames around `reference` and runs the model. clouds
// and boxes are indexed by age (index 0 = current frame; boxes[0] unused).
struct LocalSample {
  std::vector<geom::TimedPointCloud> frames;
  std::vector<Box3D> past_boxes;
  std::size_t current_points = 0;
};
LocalSample build_local_sample(const std::function<const RawCloud&(std::size_t age)>& cloud_at,
                               const std::function<Box3D(std::size_t age)>& box_at, const Box3D& reference,
                               const PipelineConfig& cfg);

// Replaces the network: returns the world box for a frame index.
using BoxOverride = std::function<Box3D(std::size_t frame)>;

struct TrackState {
  PipelineConfig config;
  const num::ParameterSet* params = nullptr;
  head::BoxSize known_size;
  std::deque<RawCloud> frames;        // frames[a - 1] has age a
  std::deque<std::size_t> frame_ids;  // source frame index of each slot
  std::deque<Box3D> boxes;            // boxes[a - 1] has age a
  std::size_t frame_index = 0;        // index of the newest consumed frame
  BoxOverride override_box;
};

struct StepResult {
  head::Prediction prediction;  // box in world coordinates
  bool coasted = false;
  num::Tensor heatmap;  // undefined when coasting or overridden
};

TrackState init(const RawCloud& first_cloud, const Box3D& gt_box, const num::ParameterSet& params,
                const PipelineConfig& cfg);
StepResult step(TrackState& state, const RawCloud& cloud);

using GroundTruthAccessor = std::function<Box3D(std::size_t frame)>;

struct RunOptions {
  BoxOverride override_box;
  std::function<void(std::size_t frame, const StepResult&)> on_step;
};

// Ground truth is read once, for frame 0.
std::vector<Box3D> run_sequence(const std::vector<RawCloud>& clouds, const GroundTruthAccessor& gt,
                                const num::ParameterSet& params, const PipelineConfig& cfg,
                                const RunOptions& options = {});
std::vector<Box3D> run_sequence(const std::vector<RawCloud>& clouds, const Box3D& gt_first,
                                const num::ParameterSet& params, const PipelineConfig& cfg);

}  // namespace sttrack::track
