#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace sttrack::geom {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

// Oriented box. l runs along the heading (box-local x), w across it
// (box-local y), h along z. theta is yaw about +z in (-pi, pi].
struct Box3D {
  double x = 0.0, y = 0.0, z = 0.0;
  double w = 1.0, l = 1.0, h = 1.0;
  double theta = 0.0;

  bool valid() const;
  bool operator==(const Box3D&) const = default;
};

struct TimedPoint {
  double x = 0.0, y = 0.0, z = 0.0, t = 0.0;
  bool operator==(const TimedPoint&) const = default;
};

// Unordered points in one local frame; t is the frame age.
struct TimedPointCloud {
  std::vector<TimedPoint> points;
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool operator==(const TimedPointCloud&) const = default;
};

double normalize_angle(double theta);

// BEV corners, counter-clockwise.
std::array<Vec2, 4> bev_corners(const Box3D& box);

// Closed test: boundary points count as inside.
bool contains_bev(const Box3D& box, double x, double y);
bool contains(const Box3D& box, double x, double y, double z);

// Sutherland-Hodgman clip of `subject` against convex CCW `clip`.
std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);
double polygon_area(std::span<const Vec2> poly);

// Areas below this are treated as zero.
inline constexpr double kAreaEpsilon = 1e-12;

double bev_intersection_area(const Box3D& a, const Box3D& b);
double bev_iou(const Box3D& a, const Box3D& b);
double iou3d(const Box3D& a, const Box3D& b);
double center_distance(const Box3D& a, const Box3D& b);
double bev_center_distance(const Box3D& a, const Box3D& b);

// Translation-only canonicalisation around the reference centre.
TimedPointCloud to_local(const TimedPointCloud& points, const Box3D& reference);
Box3D to_local(const Box3D& box, const Box3D& reference);
Box3D to_world(const Box3D& local, const Box3D& reference);

// "frame_index x y z w l h theta" per line.
void write_boxes(std::ostream& os, std::span<const Box3D> boxes);
std::vector<Box3D> read_boxes(std::istream& is);

}  // namespace sttrack::geom
