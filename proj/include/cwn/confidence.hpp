#pragma once

// Per-sample reliability scores for training:
//   surface confidence  exp(-d_S / (s * sigma_S)), d_S = distance to the clean cloud
//   normal confidence   exp(-d_N / sigma_N),       d_N = normalized angle to the
//                                                  nearest clean point's normal

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "cwn/error.hpp"
#include "cwn/io.hpp"
#include "cwn/kd_index.hpp"
#include "cwn/point_cloud.hpp"

namespace cwn {

inline constexpr double kDefaultSigmaSurface = 0.05;
inline constexpr double kDefaultSigmaNormal = 0.06;

struct ConfidenceRecord {
  std::size_t point_index = 0;
  double d_surface = 0.0;
  double d_normal = 0.0;
  double c_surface = 1.0;
  double c_normal = 1.0;
};

inline double surface_distance(const Vec3& p, const KdIndex& clean) {
  if (clean.empty()) throw Error(ErrorKind::empty_input, "clean cloud is empty");
  return clean.nearest(p).second;
}

inline double surface_confidence(double d_surface, double scale, double sigma_s) {
  if (!(scale > 0.0)) throw Error(ErrorKind::parameter, "scale must be positive");
  if (!(sigma_s > 0.0)) throw Error(ErrorKind::parameter, "sigma_S must be positive");
  if (!(d_surface >= 0.0)) throw Error(ErrorKind::parameter, "surface distance must be >= 0");
  return std::exp(-d_surface / (scale * sigma_s));
}

/// Normal of the clean point nearest to p (ties: lower index).
inline Vec3 nearest_surface_normal(const Vec3& p, const PointCloud& clean, const KdIndex& clean_index) {
  if (!clean.has_normals()) throw Error(ErrorKind::missing_data, "clean cloud carries no normals");
  if (clean_index.size() != clean.size()) throw Error(ErrorKind::size, "index does not match clean cloud");
  return clean.normal(clean_index.nearest(p).first);
}

/// arccos(|<n, n_hat>|) / (pi/2), in [0, 1]; both inputs are renormalized.
/// The angle is taken as atan2(|a x b|, |a . b|), which equals the arccos
/// form but stays accurate near 0 (exactly 0 for identical inputs).
inline double normal_discrepancy(const Vec3& n, const Vec3& n_hat) {
  const Vec3 a = unit_or_throw(n, "normal");
  const Vec3 b = unit_or_throw(n_hat, "reference normal");
  return std::atan2(a.cross(b).norm(), std::abs(a.dot(b))) / (std::numbers::pi / 2.0);
}

inline double normal_confidence(double d_normal, double sigma_n) {
  if (!(sigma_n > 0.0)) throw Error(ErrorKind::parameter, "sigma_N must be positive");
  if (!(d_normal >= 0.0 && d_normal <= 1.0)) throw Error(ErrorKind::parameter, "d_N outside [0,1]");
  return std::exp(-d_normal / sigma_n);
}

/// One record per noisy point. Association with the clean cloud is by
/// nearest neighbour, never by row order. The scale is that of the noisy cloud.
inline std::vector<ConfidenceRecord> annotate_dataset(const PointCloud& noisy, const PointCloud& clean,
                                                      double sigma_s = kDefaultSigmaSurface,
                                                      double sigma_n = kDefaultSigmaNormal) {
  if (!noisy.has_normals()) throw Error(ErrorKind::missing_data, "noisy cloud carries no annotated normals");
  if (!clean.has_normals()) throw Error(ErrorKind::missing_data, "clean cloud carries no normals");
  if (clean.empty()) throw Error(ErrorKind::empty_input, "clean cloud is empty");
  const KdIndex index(clean);
  std::vector<ConfidenceRecord> out(noisy.size());
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    const auto [j, d] = index.nearest(noisy.point(i));
    ConfidenceRecord& rec = out[i];
    rec.point_index = i;
    rec.d_surface = d;
    rec.d_normal = normal_discrepancy(noisy.normal(i), clean.normal(j));
    rec.c_surface = surface_confidence(d, noisy.scale(), sigma_s);
    rec.c_normal = normal_confidence(rec.d_normal, sigma_n);
  }
  return out;
}

enum class ConfidenceOutput { surface, normal, both };

/// Writes `<prefix>.surface.conf` and/or `<prefix>.normal.conf`.
inline std::vector<std::string> write_confidences(const std::string& prefix,
                                                  const std::vector<ConfidenceRecord>& records,
                                                  ConfidenceOutput which = ConfidenceOutput::both) {
  std::vector<std::string> written;
  if (which != ConfidenceOutput::normal) {
    std::vector<double> c;
    for (const auto& r : records) c.push_back(r.c_surface);
    written.push_back(prefix + ".surface.conf");
    io::save_conf(written.back(), c);
  }
  if (which != ConfidenceOutput::surface) {
    std::vector<double> c;
    for (const auto& r : records) c.push_back(r.c_normal);
    written.push_back(prefix + ".normal.conf");
    io::save_conf(written.back(), c);
  }
  return written;
}

}  // namespace cwn
