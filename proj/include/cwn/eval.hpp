#pragma once

// Angular error metrics: per-point errors, RMSE, PGP curve and its AUC, and
// per-category aggregation.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "cwn/error.hpp"
#include "cwn/io.hpp"
#include "cwn/point_cloud.hpp"

namespace cwn {

enum class AngleMode { unoriented, oriented };

inline const char* to_string(AngleMode m) { return m == AngleMode::unoriented ? "unoriented" : "oriented"; }

inline AngleMode parse_angle_mode(const std::string& s) {
  if (s == "unoriented") return AngleMode::unoriented;
  if (s == "oriented") return AngleMode::oriented;
  throw Error(ErrorKind::parameter, "unknown mode '" + s + "' (unoriented, oriented)");
}

/// Angle between two directions in degrees; inputs are renormalized.
/// Computed as atan2(|a x b|, a . b), accurate for nearly parallel inputs.
inline double angle_error(const Vec3& a, const Vec3& b, AngleMode mode) {
  const Vec3 ua = unit_or_throw(a);
  const Vec3 ub = unit_or_throw(b);
  double c = ua.dot(ub);
  if (mode == AngleMode::unoriented) c = std::abs(c);
  return std::atan2(ua.cross(ub).norm(), c) * 180.0 / std::numbers::pi;
}

inline std::vector<double> angle_errors(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, AngleMode mode) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorKind::size, "prediction has " + std::to_string(pred.size()) + " normals, ground truth has " +
                                     std::to_string(gt.size()));
  }
  if (pred.empty()) throw Error(ErrorKind::empty_input, "no normals to compare");
  std::vector<double> e(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) e[i] = angle_error(pred[i], gt[i], mode);
  return e;
}

inline double rmse(const std::vector<double>& errors) {
  if (errors.empty()) throw Error(ErrorKind::empty_input, "rmse of an empty error list");
  double s = 0.0;
  for (double e : errors) s += e * e;
  return std::sqrt(s / static_cast<double>(errors.size()));
}

inline constexpr std::size_t kPgpSteps = 91;  // thresholds 0..90 degrees

struct PgpAuc {
  std::vector<double> curve;  // fraction with error < tau, tau = 0..90
  double auc = 0.0;
};

inline PgpAuc pgp_auc(const std::vector<double>& errors) {
  if (errors.empty()) throw Error(ErrorKind::empty_input, "pgp of an empty error list");
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  PgpAuc r;
  r.curve.resize(kPgpSteps);
  const double n = static_cast<double>(sorted.size());
  for (std::size_t t = 0; t < kPgpSteps; ++t) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), static_cast<double>(t)) - sorted.begin();
    r.curve[t] = static_cast<double>(below) / n;
  }
  double area = 0.0;
  for (std::size_t t = 1; t < kPgpSteps; ++t) area += 0.5 * (r.curve[t - 1] + r.curve[t]);
  r.auc = area / 90.0;
  return r;
}

struct EvalReport {
  std::string shape;
  std::string category;
  AngleMode mode = AngleMode::unoriented;
  std::vector<double> per_point_errors;
  double rmse = 0.0;
  std::vector<double> pgp_curve;
  double auc = 0.0;
};

inline EvalReport evaluate(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, AngleMode mode,
                           std::string shape = {}, std::string category = {}) {
  EvalReport r;
  r.shape = std::move(shape);
  r.category = std::move(category);
  r.mode = mode;
  r.per_point_errors = angle_errors(pred, gt, mode);
  r.rmse = cwn::rmse(r.per_point_errors);
  auto p = pgp_auc(r.per_point_errors);
  r.pgp_curve = std::move(p.curve);
  r.auc = p.auc;
  return r;
}

/// Mean of per-shape RMSE values for each category, in category name order.
inline std::map<std::string, double> category_means(const std::vector<EvalReport>& reports) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : reports) {
    auto& a = acc[r.category];
    a.first += r.rmse;
    ++a.second;
  }
  std::map<std::string, double> out;
  for (const auto& [k, v] : acc) out[k] = v.first / static_cast<double>(v.second);
  return out;
}

inline void write_report_csv(std::ostream& os, const std::vector<EvalReport>& reports) {
  os << "shape,category,mode,rmse,auc\n";
  for (const auto& r : reports) {
    os << r.shape << ',' << r.category << ',' << to_string(r.mode) << ',' << io::format_real(r.rmse) << ','
       << io::format_real(r.auc) << '\n';
  }
}

/// One error in degrees per line, row-aligned with the evaluated cloud.
inline void write_errors(const std::string& path, const std::vector<double>& errors) {
  io::save_conf(path, errors);
}

}  // namespace cwn
