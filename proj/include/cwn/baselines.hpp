#pragma once

// Classical normal estimators: PCA plane fit and order-2 jet fit.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "cwn/error.hpp"
#include "cwn/kd_index.hpp"
#include "cwn/pca.hpp"
#include "cwn/point_cloud.hpp"

namespace cwn {

namespace detail {
inline std::vector<Vec3> neighborhood(const PointCloud& cloud, const KdIndex& index, std::size_t i, std::size_t k) {
  if (i >= cloud.size()) throw Error(ErrorKind::size, "query index out of range");
  std::vector<Vec3> pts;
  pts.reserve(k);
  for (auto j : index.knn(cloud.point(i), k)) pts.push_back(cloud.point(j));
  return pts;
}
}  // namespace detail

/// Normal of the least-squares plane through the k nearest neighbours of
/// point i (the point itself included).
inline Vec3 pca_normal(const PointCloud& cloud, const KdIndex& index, std::size_t i, std::size_t k) {
  if (k < 3) throw Error(ErrorKind::parameter, "pca_normal needs k >= 3");
  return pca_plane_normal(detail::neighborhood(cloud, index, i, k));
}

struct JetFit {
  Vec3 normal;
  Eigen::Matrix<double, 6, 1> coefficients;  // a0..a5 in the scaled local frame
  double condition = 0.0;
  bool fell_back = false;  // true when the PCA normal was returned instead
};

inline constexpr double kJetRidge = 1e-12;
inline constexpr double kJetMaxCondition = 1e12;

/// Height field h = a0 + a1 x + a2 y + a3 x² + a4 xy + a5 y² fitted in the
/// neighbourhood's PCA frame, centred on point i. The normal is the surface
/// normal at the query, (-a1, -a2, 1) mapped back to world coordinates.
inline JetFit jet_fit(const PointCloud& cloud, const KdIndex& index, std::size_t i, std::size_t k) {
  if (k < 6) throw Error(ErrorKind::parameter, "jet_normal needs k >= 6");
  const auto pts = detail::neighborhood(cloud, index, i, k);
  const PcaFrame frame = pca_frame(pts);
  const Vec3& origin = cloud.point(i);

  std::vector<Vec3> local(pts.size());
  double extent = 0.0;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    local[j] = frame.rotation * (pts[j] - origin);
    extent = std::max(extent, local[j].head<2>().norm());
  }
  if (!(extent > 0.0)) throw Error(ErrorKind::degenerate, "jet neighbourhood has no planar extent");

  using Mat6 = Eigen::Matrix<double, 6, 6>;
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  Mat6 ata = Mat6::Zero();
  Vec6 atb = Vec6::Zero();
  for (const auto& q : local) {
    const double x = q.x() / extent, y = q.y() / extent, h = q.z() / extent;
    Vec6 row;
    row << 1.0, x, y, x * x, x * y, y * y;
    ata.noalias() += row * row.transpose();
    atb.noalias() += row * h;
  }
  ata += kJetRidge * Mat6::Identity();

  JetFit fit;
  Eigen::SelfAdjointEigenSolver<Mat6> es(ata, Eigen::EigenvaluesOnly);
  const auto ev = es.eigenvalues();
  fit.condition = ev[0] > 0.0 ? ev[5] / ev[0] : std::numeric_limits<double>::infinity();
  if (!(fit.condition <= kJetMaxCondition)) {
    fit.fell_back = true;
    fit.coefficients.setZero();
    fit.normal = frame.rotation.row(2).transpose();
    return fit;
  }
  fit.coefficients = ata.ldlt().solve(atb);
  const Vec3 n_local(-fit.coefficients[1], -fit.coefficients[2], 1.0);
  fit.normal = (frame.rotation.transpose() * n_local).normalized();
  return fit;
}

inline Vec3 jet_normal(const PointCloud& cloud, const KdIndex& index, std::size_t i, std::size_t k) {
  return jet_fit(cloud, index, i, k).normal;
}

enum class BaselineMethod { pca, jet };

struct BaselineResult {
  std::vector<Vec3> normals;
  std::size_t fallbacks = 0;  // jet queries that returned the PCA normal
};

/// Baseline normals for every point of `cloud`, split over `jobs` threads.
inline BaselineResult baseline_normals(const PointCloud& cloud, BaselineMethod method, std::size_t k,
                                       unsigned jobs = 1) {
  if (cloud.empty()) throw Error(ErrorKind::empty_input, "empty point cloud");
  if (k > cloud.size()) {
    throw Error(ErrorKind::parameter, "k=" + std::to_string(k) + " exceeds point count " +
                                          std::to_string(cloud.size()));
  }
  const KdIndex index(cloud);
  BaselineResult res;
  res.normals.resize(cloud.size());
  std::vector<char> fell(cloud.size(), 0);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < cloud.size(); i += stride) {
      if (method == BaselineMethod::pca) {
        res.normals[i] = pca_normal(cloud, index, i, k);
      } else {
        const JetFit f = jet_fit(cloud, index, i, k);
        res.normals[i] = f.normal;
        fell[i] = f.fell_back;
      }
    }
  };
  jobs = std::max(1u, jobs);
  if (jobs == 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(jobs);
    {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < jobs; ++t) {
        pool.emplace_back([&, t] {
          try {
            work(t, jobs);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  for (char f : fell) res.fallbacks += static_cast<std::size_t>(f);
  return res;
}

}  // namespace cwn
