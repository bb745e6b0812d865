#include "sttrack/geometry/box.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "sttrack/numerics/errors.hpp"

namespace sttrack::geom {

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

Vec2 intersect(const Vec2& p, const Vec2& q, const Vec2& a, const Vec2& b) {
  // Segment pq against the infinite line ab.
  const double d1 = cross(a, b, p);
  const double d2 = cross(a, b, q);
  const double t = d1 / (d1 - d2);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

}  // namespace

bool Box3D::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && w > 0 && l > 0 && h > 0 &&
         std::isfinite(theta);
}

double normalize_angle(double theta) {
  double t = std::remainder(theta, 2.0 * M_PI);  // [-pi, pi]
  if (t <= -M_PI) t += 2.0 * M_PI;
  return t;
}

std::array<Vec2, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  const double hl = box.l / 2, hw = box.w / 2;
  const double lx[4] = {hl, -hl, -hl, hl};
  const double ly[4] = {hw, hw, -hw, -hw};
  std::array<Vec2, 4> out;
  // (hl,hw) -> (-hl,hw) -> (-hl,-hw) -> (hl,-hw) is counter-clockwise.
  for (int k = 0; k < 4; ++k) out[k] = {box.x + c * lx[k] - s * ly[k], box.y + s * lx[k] + c * ly[k]};
  return out;
}

bool contains_bev(const Box3D& box, double x, double y) {
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  const double dx = x - box.x, dy = y - box.y;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= box.l / 2 && std::abs(ly) <= box.w / 2;
}

bool contains(const Box3D& box, double x, double y, double z) {
  return std::abs(z - box.z) <= box.h / 2 && contains_bev(box, x, y);
}

std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> out(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    std::vector<Vec2> in;
    in.swap(out);
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Vec2& p = in[i];
      const Vec2& q = in[(i + 1) % in.size()];
      const bool p_in = cross(a, b, p) >= 0;
      const bool q_in = cross(a, b, q) >= 0;
      if (p_in) out.push_back(p);
      if (p_in != q_in) out.push_back(intersect(p, q, a, b));
    }
  }
  return out;
}

double polygon_area(std::span<const Vec2> poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  const double area = std::abs(twice) / 2;
  return area < kAreaEpsilon ? 0.0 : area;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  // Coincident footprints: clipping round-off would leave the area just short.
  if (a.x == b.x && a.y == b.y && a.w == b.w && a.l == b.l && a.theta == b.theta) return a.w * a.l;
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  return polygon_area(clip_convex(ca, cb));
}

double bev_iou(const Box3D& a, const Box3D& b) {
  const double inter = bev_intersection_area(a, b);
  const double uni = a.w * a.l + b.w * b.l - inter;
  if (uni <= kAreaEpsilon) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou3d(const Box3D& a, const Box3D& b) {
  const double top = std::min(a.z + a.h / 2, b.z + b.h / 2);
  const double bottom = std::max(a.z - a.h / 2, b.z - b.h / 2);
  const double overlap_h = (a.z == b.z && a.h == b.h) ? a.h : std::max(0.0, top - bottom);
  const double inter = bev_intersection_area(a, b) * overlap_h;
  const double uni = a.w * a.l * a.h + b.w * b.l * b.h - inter;
  if (uni <= kAreaEpsilon) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double center_distance(const Box3D& a, const Box3D& b) {
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

double bev_center_distance(const Box3D& a, const Box3D& b) { return std::hypot(a.x - b.x, a.y - b.y); }

TimedPointCloud to_local(const TimedPointCloud& points, const Box3D& reference) {
  TimedPointCloud out;
  out.points.reserve(points.size());
  for (const auto& p : points.points) {
    out.points.push_back({p.x - reference.x, p.y - reference.y, p.z - reference.z, p.t});
  }
  return out;
}

Box3D to_local(const Box3D& box, const Box3D& reference) {
  Box3D out = box;
  out.x -= reference.x;
  out.y -= reference.y;
  out.z -= reference.z;
  return out;
}

Box3D to_world(const Box3D& local, const Box3D& reference) {
  Box3D out = local;
  out.x += reference.x;
  out.y += reference.y;
  out.z += reference.z;
  return out;
}

void write_boxes(std::ostream& os, std::span<const Box3D> boxes) {
  char line[512];
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const auto& b = boxes[k];
    std::snprintf(line, sizeof line, "%zu %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", k, b.x, b.y, b.z, b.w, b.l,
                  b.h, b.theta);
    os << line;
  }
}

std::vector<Box3D> read_boxes(std::istream& is) {
  std::vector<Box3D> boxes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    ls.imbue(std::locale::classic());
    long long frame = -1;
    Box3D b;
    if (!(ls >> frame >> b.x >> b.y >> b.z >> b.w >> b.l >> b.h >> b.theta)) {
      throw FormatError("boxes: malformed line " + std::to_string(lineno));
    }
    if (frame != static_cast<long long>(boxes.size())) {
      throw FormatError("boxes: expected frame " + std::to_string(boxes.size()) + " on line " +
                        std::to_string(lineno));
    }
    if (!b.valid()) throw FormatError("boxes: invalid box on line " + std::to_string(lineno));
    boxes.push_back(b);
  }
  return boxes;
}

}  // namespace sttrack::geom
