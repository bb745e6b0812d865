#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sttrack/geometry/box.hpp"

namespace sttrack::eval {

inline constexpr std::size_t kThresholds = 201;
inline constexpr double kMaxDistance = 2.0;

struct SequenceEval {
  std::vector<double> ious;
  std::vector<double> bev_ious;
  std::vector<double> dists;
  std::vector<double> bev_dists;
  std::size_t frame_count() const { return ious.size(); }
};

struct CategoryReport {
  std::string name;
  std::size_t frames = 0;
  double success = 0.0;
  double precision = 0.0;
  double success_bev = 0.0;
  double precision_bev = 0.0;
};

// s(tau) = fraction with IoU > tau over `thresholds` uniform taus in [0, 1];
// trapezoid area scaled to [0, 100].
double success(std::span<const double> ious, std::size_t thresholds = kThresholds);
// p(tau) = fraction with distance < tau, tau in [0, 2] m.
double precision(std::span<const double> dists, std::size_t thresholds = kThresholds);

// (tau, s(tau)) samples used by success/precision.
std::vector<std::pair<double, double>> success_curve(std::span<const double> ious,
                                                     std::size_t thresholds = kThresholds);
std::vector<std::pair<double, double>> precision_curve(std::span<const double> dists,
                                                       std::size_t thresholds = kThresholds);

// sum(V_n F_n) / sum(F_n) over success values.
double weighted_mean(std::span<const CategoryReport> reports);
double weighted_mean_precision(std::span<const CategoryReport> reports);

// Frame 0 is skipped: it is the given box.
SequenceEval evaluate_sequence(std::span<const geom::Box3D> predictions, std::span<const geom::Box3D> ground_truth);

struct SequenceInput {
  std::string category;
  std::vector<geom::Box3D> predictions;
  std::vector<geom::Box3D> ground_truth;
};

struct Report {
  std::vector<CategoryReport> categories;  // first-appearance order
  CategoryReport mean;                     // name "Mean", frame-weighted
};

Report evaluate_sequences(std::span<const SequenceInput> sequences);

// category,frames,success_3d,precision_3d,success_bev,precision_bev
void write_report_csv(std::ostream& os, const Report& report);
// tau_iou,success_3d,success_bev,tau_dist,precision_3d; one row per threshold.
void write_curves_csv(std::ostream& os, const SequenceEval& pooled);

}  // namespace sttrack::eval
