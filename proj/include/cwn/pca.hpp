#pragma once

#include <Eigen/Eigenvalues>

#include <vector>

#include "cwn/error.hpp"
#include "cwn/point_cloud.hpp"

namespace cwn {

struct PcaFrame {
  Vec3 centroid;
  Vec3 eigenvalues;  // descending
  /// Rows are the principal axes in descending eigenvalue order, so
  /// `rotation * (p - centroid)` expresses p in the frame and the
  /// smallest-variance axis maps to z. det = +1.
  Mat3 rotation;
};

/// Covariance eigen-frame of a point set. Throws when fewer than 3 points are
/// given or the covariance has rank < 2 (collinear input).
inline PcaFrame pca_frame(const std::vector<Vec3>& pts) {
  if (pts.size() < 3) throw Error(ErrorKind::degenerate, "PCA needs at least 3 points");
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) {
    const Vec3 d = p - c;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(pts.size());

  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::degenerate, "covariance eigensolve failed");
  const Vec3 ev = es.eigenvalues();  // ascending
  if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2]) {
    throw Error(ErrorKind::degenerate, "rank-deficient covariance (collinear or coincident points)");
  }
  Mat3 axes;  // columns: descending eigenvalue
  axes.col(0) = es.eigenvectors().col(2);
  axes.col(1) = es.eigenvectors().col(1);
  axes.col(2) = axes.col(0).cross(axes.col(1)).normalized();

  PcaFrame f;
  f.centroid = c;
  f.eigenvalues = Vec3(ev[2], ev[1], ev[0]);
  f.rotation = axes.transpose();
  return f;
}

/// Smallest-variance direction of the point set (unoriented).
inline Vec3 pca_plane_normal(const std::vector<Vec3>& pts) {
  return pca_frame(pts).rotation.row(2).transpose();
}

}  // namespace cwn
