#include "sttrack/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace sttrack::harness {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double to_double(std::string_view key, std::string_view v) {
  std::istringstream is{std::string(v)};
  is.imbue(std::locale::classic());
  double d = 0;
  if (!(is >> d) || !is.eof()) throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  return d;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t n = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return n;
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;
using Getter = std::function<std::string(const RunConfig&)>;
struct Key {
  Setter set;
  Getter get;
};

std::string fmt(double d) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << d;
  return os.str();
}

#define STTRACK_DOUBLE(path) \
  Key { [](RunConfig& c, std::string_view k, std::string_view v) { c.path = to_double(k, v); }, \
        [](const RunConfig& c) { return fmt(c.path); } }
#define STTRACK_UINT(path) \
  Key { [](RunConfig& c, std::string_view k, std::string_view v) { c.path = to_uint(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.path); } }

const std::map<std::string, Key, std::less<>>& table() {
  static const std::map<std::string, Key, std::less<>> kTable{
      {"grid.range", STTRACK_DOUBLE(grid.range)},
      {"grid.pillar", STTRACK_DOUBLE(grid.pillar)},
      {"grid.stride", STTRACK_UINT(grid.stride)},
      {"grid.z_min", STTRACK_DOUBLE(grid.z_min)},
      {"grid.z_max", STTRACK_DOUBLE(grid.z_max)},
      {"pillars.channels", STTRACK_UINT(pipeline.pillars.pillar_channels)},
      {"backbone.channels",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          const auto n = to_uint(k, v);
          c.pipeline.pillars.feature_channels = c.pipeline.stlm.c1 = c.pipeline.stlm.c2 = n;
          c.pipeline.head.in_channels = n;
        },
        [](const RunConfig& c) { return std::to_string(c.pipeline.stlm.c1); }}},
      {"stlm.c3", STTRACK_UINT(pipeline.stlm.c3)},
      {"stlm.c4", STTRACK_UINT(pipeline.stlm.c4)},
      {"stlm.patch_r", STTRACK_UINT(pipeline.stlm.patch_r)},
      {"stlm.heads", STTRACK_UINT(pipeline.stlm.heads)},
      {"stlm.samples", STTRACK_UINT(pipeline.stlm.samples)},
      {"stlm.variant",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.pipeline.stlm.variant = stlm::parse_variant(v); },
        [](const RunConfig& c) { return std::string(stlm::to_string(c.pipeline.stlm.variant)); }}},
      {"pattern",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.pipeline.pattern = track::FramePattern::parse(v); },
        [](const RunConfig& c) { return c.pipeline.pattern.str(); }}},
      {"head.hidden", STTRACK_UINT(pipeline.head.hidden)},
      {"head.assignment",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.pipeline.head.assignment = head::parse_assignment(v); },
        [](const RunConfig& c) { return std::string(head::to_string(c.pipeline.head.assignment)); }}},
      {"head.w_offset", STTRACK_DOUBLE(pipeline.head.w_offset)},
      {"head.w_height", STTRACK_DOUBLE(pipeline.head.w_height)},
      {"head.w_orientation", STTRACK_DOUBLE(pipeline.head.w_orientation)},
      {"head.focal_alpha", STTRACK_DOUBLE(pipeline.head.focal.alpha)},
      {"head.focal_beta", STTRACK_DOUBLE(pipeline.head.focal.beta)},
      {"train.steps", STTRACK_UINT(train.steps)},
      {"train.lr", STTRACK_DOUBLE(train.lr)},
      {"train.momentum", STTRACK_DOUBLE(train.momentum)},
      {"train.seed", STTRACK_UINT(train.seed)},
      {"train.batch", STTRACK_UINT(train.batch)},
      {"train.sequences", STTRACK_UINT(train.sequences)},
      {"train.jitter", STTRACK_DOUBLE(train.jitter)},
      {"train.jitter_z", STTRACK_DOUBLE(train.jitter_z)},
      {"train.jitter_theta", STTRACK_DOUBLE(train.jitter_theta)},
      {"train.lr_final", STTRACK_DOUBLE(train.lr_final)},
      {"train.clip", STTRACK_DOUBLE(train.clip)},
      {"scene.motion",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.scene.motion = parse_motion(v); },
        [](const RunConfig& c) { return std::string(to_string(c.scene.motion)); }}},
      {"scene.speed", STTRACK_DOUBLE(scene.speed)},
      {"scene.yaw_rate", STTRACK_DOUBLE(scene.yaw_rate)},
      {"scene.target_points", STTRACK_UINT(scene.target_points)},
      {"scene.clutter_points", STTRACK_UINT(scene.clutter_points)},
      {"scene.distractors", STTRACK_UINT(scene.distractors)},
      {"scene.noise", STTRACK_DOUBLE(scene.noise)},
      {"scene.frames", STTRACK_UINT(scene.frames)},
      {"scene.seed", STTRACK_UINT(scene.seed)},
      {"scene.box_w", STTRACK_DOUBLE(scene.box_w)},
      {"scene.box_l", STTRACK_DOUBLE(scene.box_l)},
      {"scene.box_h", STTRACK_DOUBLE(scene.box_h)},
      {"scene.extent", STTRACK_DOUBLE(scene.extent)},
      {"scene.ground_z", STTRACK_DOUBLE(scene.ground_z)},
  };
  return kTable;
}

#undef STTRACK_DOUBLE
#undef STTRACK_UINT

}  // namespace

void RunConfig::finalize() {
  pipeline.grid = geom::GridConfig::centered(grid.range, grid.pillar, grid.stride, grid.z_min, grid.z_max);
  pipeline.validate();
  scene.validate();
  if (!(train.lr > 0) || !(train.momentum >= 0 && train.momentum < 1)) {
    throw ConfigError("train: lr must be > 0 and momentum in [0, 1)");
  }
  if (train.sequences < 1 || train.batch < 1) throw ConfigError("train.sequences and train.batch must be >= 1");
  if (!(train.lr_final > 0 && train.lr_final <= 1)) throw ConfigError("train.lr_final must be in (0, 1]");
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto it = table().find(key);
  if (it == table().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second.set(cfg, key, value);
}

RunConfig parse_config(std::istream& is) {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_setting(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  cfg.finalize();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  return parse_config(is);
}

void write_config(std::ostream& os, const RunConfig& cfg) {
  for (const auto& [key, entry] : table()) os << key << " = " << entry.get(cfg) << '\n';
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> kKeys = [] {
    std::vector<std::string> keys;
    for (const auto& [key, entry] : table()) keys.push_back(key);
    return keys;
  }();
  return kKeys;
}

}  // namespace sttrack::harness
