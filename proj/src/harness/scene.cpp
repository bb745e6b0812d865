#include "sttrack/harness/scene.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "sttrack/numerics/errors.hpp"
#include "sttrack/numerics/random.hpp"

namespace sttrack::harness {

namespace {

// The store keeps gcc 11 -O3 from dropping the narrowing on the x/y pair.
double to_float(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

pillars::Point3 rounded(double x, double y, double z) { return {to_float(x), to_float(y), to_float(z)}; }

struct Mover {
  Box3D start;
  double speed = 0.0;
  double yaw_rate = 0.0;
  Motion motion = Motion::kStatic;

  Box3D at(std::size_t k) const {
    Box3D b = start;
    const double kk = static_cast<double>(k);
    switch (motion) {
      case Motion::kStatic: break;
      case Motion::kConstantVelocity:
        b.x = start.x + kk * speed * std::cos(start.theta);
        b.y = start.y + kk * speed * std::sin(start.theta);
        break;
      case Motion::kConstantTurn: {
        double heading = start.theta;
        for (std::size_t i = 0; i < k; ++i) {
          b.x += speed * std::cos(heading);
          b.y += speed * std::sin(heading);
          heading += yaw_rate;
        }
        b.theta = geom::normalize_angle(heading);
        break;
      }
    }
    return b;
  }
};

}  // namespace

std::string_view to_string(Motion m) {
  switch (m) {
    case Motion::kStatic: return "static";
    case Motion::kConstantVelocity: return "constant_velocity";
    case Motion::kConstantTurn: return "constant_turn";
  }
  return "static";
}

Motion parse_motion(std::string_view name) {
  for (auto m : {Motion::kStatic, Motion::kConstantVelocity, Motion::kConstantTurn}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("scene.motion: unknown value '" + std::string(name) + "'");
}

void SceneSpec::validate() const {
  if (frames < 1) throw ConfigError("scene.frames must be >= 1");
  if (!(noise >= 0) || !(speed >= 0)) throw ConfigError("scene: noise and speed must be >= 0");
  if (!(box_w > 0 && box_l > 0 && box_h > 0)) throw ConfigError("scene: box extents must be positive");
  if (!(extent > 0)) throw ConfigError("scene.extent must be positive");
  if (!std::isfinite(yaw_rate)) throw ConfigError("scene.yaw_rate must be finite");
}

RawCloud sample_box_surface(const Box3D& box, std::size_t count, double noise, num::Rng& rng) {
  const double aw = box.l * box.h, al = box.w * box.h, at = box.l * box.w;  // faces normal to y, x, z
  const double total = 2 * (aw + al + at);
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  RawCloud out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const double pick = rng.uniform() * total;
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double u = rng.uniform() - 0.5, v = rng.uniform() - 0.5;
    double lx, ly, lz;
    if (pick < 2 * aw) {
      lx = u * box.l, ly = sign * box.w / 2, lz = v * box.h;
    } else if (pick < 2 * (aw + al)) {
      lx = sign * box.l / 2, ly = u * box.w, lz = v * box.h;
    } else {
      lx = u * box.l, ly = v * box.w, lz = sign * box.h / 2;
    }
    const double x = box.x + c * lx - s * ly + noise * rng.normal();
    const double y = box.y + s * lx + c * ly + noise * rng.normal();
    const double z = box.z + lz + noise * rng.normal();
    out.push_back(rounded(x, y, z));
  }
  return out;
}

Sequence generate_sequence(const SceneSpec& spec) {
  spec.validate();
  num::Rng rng(num::derive_seed(spec.seed, "scene"));
  Mover target;
  target.motion = spec.motion;
  target.speed = spec.motion == Motion::kStatic ? 0.0 : spec.speed;
  target.yaw_rate = spec.yaw_rate;
  target.start = Box3D{0.0, 0.0, spec.ground_z + spec.box_h / 2, spec.box_w, spec.box_l, spec.box_h,
                       geom::normalize_angle(rng.uniform(-M_PI, M_PI))};

  std::vector<Mover> distractors;
  for (std::size_t d = 0; d < spec.distractors; ++d) {
    Mover m;
    m.motion = Motion::kConstantVelocity;
    const double bearing = rng.uniform(-M_PI, M_PI);
    const double range = rng.uniform(spec.box_l + 1.0, spec.box_l + 6.0);
    m.start = target.start;
    m.start.x = range * std::cos(bearing);
    m.start.y = range * std::sin(bearing);
    m.start.theta = geom::normalize_angle(rng.uniform(-M_PI, M_PI));
    m.speed = rng.uniform(0.0, 2.0 * spec.speed);
    distractors.push_back(m);
  }

  const double half = spec.extent / 2;
  Sequence seq;
  for (std::size_t k = 0; k < spec.frames; ++k) {
    const Box3D box = target.at(k);
    RawCloud cloud = sample_box_surface(box, spec.target_points, spec.noise, rng);
    for (const auto& m : distractors) {
      auto pts = sample_box_surface(m.at(k), spec.target_points, spec.noise, rng);
      cloud.insert(cloud.end(), pts.begin(), pts.end());
    }
    for (std::size_t n = 0; n < spec.clutter_points; ++n) {
      const double x = target.start.x + rng.uniform(-half, half);
      const double y = target.start.y + rng.uniform(-half, half);
      const double z = rng.uniform(spec.ground_z, spec.ground_z + 3.0);
      cloud.push_back(rounded(x, y, z));
    }
    seq.clouds.push_back(std::move(cloud));
    seq.boxes.push_back(box);
  }
  return seq;
}

Sequence subsample_sequence(const Sequence& seq, std::size_t stride) {
  if (stride < 1) throw ConfigError("subsample: stride must be >= 1");
  if (seq.clouds.size() != seq.boxes.size()) throw DimensionError("subsample: clouds and boxes differ in length");
  Sequence out;
  for (std::size_t k = 0; k < seq.size(); k += stride) {
    out.clouds.push_back(seq.clouds[k]);
    out.boxes.push_back(seq.boxes[k]);
  }
  return out;
}

void save_sequence(const std::filesystem::path& dir, const Sequence& seq) {
  std::filesystem::create_directories(dir / "clouds");
  {
    std::ofstream os(dir / "gt.txt");
    if (!os) throw FormatError("cannot write " + (dir / "gt.txt").string());
    geom::write_boxes(os, seq.boxes);
  }
  char name[32];
  for (std::size_t k = 0; k < seq.clouds.size(); ++k) {
    std::snprintf(name, sizeof name, "%06zu.bin", k);
    pillars::save_cloud(dir / "clouds" / name, seq.clouds[k]);
  }
}

Sequence load_sequence(const std::filesystem::path& dir) {
  Sequence seq;
  std::ifstream is(dir / "gt.txt");
  if (!is) throw FormatError("cannot read " + (dir / "gt.txt").string());
  seq.boxes = geom::read_boxes(is);
  char name[32];
  for (std::size_t k = 0; k < seq.boxes.size(); ++k) {
    std::snprintf(name, sizeof name, "%06zu.bin", k);
    seq.clouds.push_back(pillars::load_cloud(dir / "clouds" / name));
  }
  return seq;
}

}  // namespace sttrack::harness
