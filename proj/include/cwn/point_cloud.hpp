#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cwn/error.hpp"

namespace cwn {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Euclidean diagonal of the axis-aligned bounding box. Zero for empty input.
inline double bbox_diagonal(const std::vector<Vec3>& points) {
  if (points.empty()) return 0.0;
  Vec3 lo = points.front();
  Vec3 hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

/// Positions with optional per-point normals and confidences.
///
/// Attribute arrays are validated on assignment: normals must be unit length
/// (within 1e-9) and confidences must lie in [0, 1]. The scale (bounding-box
/// diagonal) is recomputed whenever positions change.
class PointCloud {
 public:
  static constexpr double kUnitTolerance = 1e-9;

  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> points) { set_points(std::move(points)); }

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }

  const std::vector<Vec3>& points() const noexcept { return points_; }
  const Vec3& point(std::size_t i) const { return points_.at(i); }
  double scale() const noexcept { return scale_; }

  void set_points(std::vector<Vec3> points) {
    if (normals_ && normals_->size() != points.size()) normals_.reset();
    if (confidences_ && confidences_->size() != points.size()) confidences_.reset();
    points_ = std::move(points);
    scale_ = bbox_diagonal(points_);
  }

  bool has_normals() const noexcept { return normals_.has_value(); }
  const std::vector<Vec3>& normals() const {
    if (!normals_) throw Error(ErrorKind::missing_data, "point cloud carries no normals");
    return *normals_;
  }
  const Vec3& normal(std::size_t i) const { return normals().at(i); }

  void set_normals(std::vector<Vec3> normals) {
    if (normals.size() != points_.size()) {
      throw Error(ErrorKind::size, "normals count " + std::to_string(normals.size()) +
                                       " != point count " + std::to_string(points_.size()));
    }
    for (std::size_t i = 0; i < normals.size(); ++i) {
      if (std::abs(normals[i].norm() - 1.0) > kUnitTolerance) {
        throw Error(ErrorKind::parameter, "normal " + std::to_string(i) + " is not unit length");
      }
    }
    normals_ = std::move(normals);
  }
  void clear_normals() noexcept { normals_.reset(); }

  bool has_confidences() const noexcept { return confidences_.has_value(); }
  const std::vector<double>& confidences() const {
    if (!confidences_) throw Error(ErrorKind::missing_data, "point cloud carries no confidences");
    return *confidences_;
  }

  void set_confidences(std::vector<double> conf) {
    if (conf.size() != points_.size()) {
      throw Error(ErrorKind::size, "confidence count " + std::to_string(conf.size()) +
                                       " != point count " + std::to_string(points_.size()));
    }
    for (std::size_t i = 0; i < conf.size(); ++i) {
      if (!(conf[i] >= 0.0 && conf[i] <= 1.0)) {
        throw Error(ErrorKind::parameter, "confidence " + std::to_string(i) + " outside [0,1]");
      }
    }
    confidences_ = std::move(conf);
  }

 private:
  std::vector<Vec3> points_;
  std::optional<std::vector<Vec3>> normals_;
  std::optional<std::vector<double>> confidences_;
  double scale_ = 0.0;
};

/// Returns `v / |v|`; throws on (near) zero vectors.
inline Vec3 unit_or_throw(const Vec3& v, const char* what = "vector") {
  const double n = v.norm();
  if (!(n > 1e-300) || !std::isfinite(n)) {
    throw Error(ErrorKind::degenerate, std::string("zero-length ") + what);
  }
  return v / n;
}

/// Renormalizes every vector, throwing on zero-length entries.
inline std::vector<Vec3> normalized(std::vector<Vec3> v) {
  for (auto& n : v) n = unit_or_throw(n, "normal");
  return v;
}

}  // namespace cwn
