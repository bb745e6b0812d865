#include "sttrack/eval/eval.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "sttrack/numerics/errors.hpp"

namespace sttrack::eval {

namespace {

// Trapezoid over uniformly spaced samples, normalised to the range.
double area(const std::vector<std::pair<double, double>>& curve) {
  double a = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    a += 0.5 * (curve[k].second + curve[k - 1].second) * (curve[k].first - curve[k - 1].first);
  }
  return a / (curve.back().first - curve.front().first);
}

void check_thresholds(std::size_t thresholds) {
  if (thresholds < 2) throw ContractError("metrics need at least two thresholds");
}

}  // namespace

std::vector<std::pair<double, double>> success_curve(std::span<const double> ious, std::size_t thresholds) {
  if (ious.empty()) throw ContractError("success: no frames");
  check_thresholds(thresholds);
  for (double v : ious) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("success: IoU outside [0, 1]");
  }
  std::vector<std::pair<double, double>> curve;
  curve.reserve(thresholds);
  const double n = static_cast<double>(ious.size());
  for (std::size_t k = 0; k < thresholds; ++k) {
    const bool last = k + 1 == thresholds;
    const double tau = last ? 1.0 : static_cast<double>(k) / static_cast<double>(thresholds - 1);
    std::size_t hit = 0;
    // At tau = 1 use the left limit (IoU >= 1) so perfect overlap scores 100.
    for (double v : ious) hit += last ? (v >= tau) : (v > tau);
    curve.emplace_back(tau, static_cast<double>(hit) / n);
  }
  return curve;
}

std::vector<std::pair<double, double>> precision_curve(std::span<const double> dists, std::size_t thresholds) {
  if (dists.empty()) throw ContractError("precision: no frames");
  check_thresholds(thresholds);
  for (double d : dists) {
    if (!(d >= 0.0)) throw ContractError("precision: negative or NaN distance");
  }
  std::vector<std::pair<double, double>> curve;
  curve.reserve(thresholds);
  const double n = static_cast<double>(dists.size());
  for (std::size_t k = 0; k < thresholds; ++k) {
    const double tau = kMaxDistance * static_cast<double>(k) / static_cast<double>(thresholds - 1);
    std::size_t hit = 0;
    // At tau = 0 use the right limit (d <= 0) so zero error scores 100.
    for (double d : dists) hit += k == 0 ? (d <= tau) : (d < tau);
    curve.emplace_back(tau, static_cast<double>(hit) / n);
  }
  return curve;
}

double success(std::span<const double> ious, std::size_t thresholds) {
  return 100.0 * area(success_curve(ious, thresholds));
}

double precision(std::span<const double> dists, std::size_t thresholds) {
  return 100.0 * area(precision_curve(dists, thresholds));
}

double weighted_mean(std::span<const CategoryReport> reports) {
  if (reports.empty()) throw ContractError("weighted_mean: no categories");
  double num = 0.0, den = 0.0;
  for (const auto& r : reports) {
    if (r.frames == 0) throw ContractError("weighted_mean: category '" + r.name + "' has no frames");
    num += r.success * static_cast<double>(r.frames);
    den += static_cast<double>(r.frames);
  }
  return num / den;
}

double weighted_mean_precision(std::span<const CategoryReport> reports) {
  std::vector<CategoryReport> swapped(reports.begin(), reports.end());
  for (auto& r : swapped) r.success = r.precision;
  return weighted_mean(swapped);
}

SequenceEval evaluate_sequence(std::span<const geom::Box3D> predictions, std::span<const geom::Box3D> ground_truth) {
  if (predictions.size() != ground_truth.size()) {
    throw DimensionError("evaluate: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(ground_truth.size()) + " ground-truth boxes");
  }
  SequenceEval e;
  for (std::size_t k = 1; k < predictions.size(); ++k) {
    e.ious.push_back(geom::iou3d(predictions[k], ground_truth[k]));
    e.bev_ious.push_back(geom::bev_iou(predictions[k], ground_truth[k]));
    e.dists.push_back(geom::center_distance(predictions[k], ground_truth[k]));
    e.bev_dists.push_back(geom::bev_center_distance(predictions[k], ground_truth[k]));
  }
  return e;
}

Report evaluate_sequences(std::span<const SequenceInput> sequences) {
  std::vector<std::string> order;
  std::map<std::string, SequenceEval> pooled;
  for (const auto& s : sequences) {
    const auto e = evaluate_sequence(s.predictions, s.ground_truth);
    if (!pooled.count(s.category)) order.push_back(s.category);
    auto& p = pooled[s.category];
    p.ious.insert(p.ious.end(), e.ious.begin(), e.ious.end());
    p.bev_ious.insert(p.bev_ious.end(), e.bev_ious.begin(), e.bev_ious.end());
    p.dists.insert(p.dists.end(), e.dists.begin(), e.dists.end());
    p.bev_dists.insert(p.bev_dists.end(), e.bev_dists.begin(), e.bev_dists.end());
  }
  Report report;
  for (const auto& name : order) {
    const auto& p = pooled[name];
    if (p.frame_count() == 0) throw ContractError("evaluate: category '" + name + "' has no scored frames");
    CategoryReport r;
    r.name = name;
    r.frames = p.frame_count();
    r.success = success(p.ious);
    r.precision = precision(p.dists);
    r.success_bev = success(p.bev_ious);
    r.precision_bev = precision(p.bev_dists);
    report.categories.push_back(r);
  }
  if (report.categories.empty()) throw ContractError("evaluate: no sequences");
  auto& m = report.mean;
  m.name = "Mean";
  for (const auto& r : report.categories) m.frames += r.frames;
  const double total = static_cast<double>(m.frames);
  for (const auto& r : report.categories) {
    const double w = static_cast<double>(r.frames) / total;
    m.success += w * r.success;
    m.precision += w * r.precision;
    m.success_bev += w * r.success_bev;
    m.precision_bev += w * r.precision_bev;
  }
  return report;
}

void write_report_csv(std::ostream& os, const Report& report) {
  char line[256];
  os << "category,frames,success_3d,precision_3d,success_bev,precision_bev\n";
  auto row = [&](const CategoryReport& r) {
    std::snprintf(line, sizeof line, "%s,%zu,%.4f,%.4f,%.4f,%.4f\n", r.name.c_str(), r.frames, r.success,
                  r.precision, r.success_bev, r.precision_bev);
    os << line;
  };
  for (const auto& r : report.categories) row(r);
  row(report.mean);
}

void write_curves_csv(std::ostream& os, const SequenceEval& pooled) {
  const auto s3 = success_curve(pooled.ious);
  const auto sb = success_curve(pooled.bev_ious);
  const auto p3 = precision_curve(pooled.dists);
  char line[160];
  os << "tau_iou,success_3d,success_bev,tau_dist,precision_3d\n";
  for (std::size_t k = 0; k < s3.size(); ++k) {
    std::snprintf(line, sizeof line, "%.4f,%.6f,%.6f,%.4f,%.6f\n", s3[k].first, s3[k].second, sb[k].second,
                  p3[k].first, p3[k].second);
    os << line;
  }
}

}  // namespace sttrack::eval
