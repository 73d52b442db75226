#pragma once

// Per-query network inputs: a kNN patch (query-centered, unit radius,
// PCA-aligned) and a global point set drawn with distance-decaying
// probabilities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "cwn/error.hpp"
#include "cwn/kd_index.hpp"
#include "cwn/pca.hpp"
#include "cwn/point_cloud.hpp"

namespace cwn {

using Rng = std::mt19937_64;

/// Independent, reproducible stream for one query of one run.
inline Rng query_rng(std::uint64_t seed, std::uint64_t query) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(query), static_cast<std::uint32_t>(query >> 32)};
  return Rng(seq);
}

struct Patch {
  std::size_t query_index = 0;
  std::vector<Vec3> local_points;  // [0] is the query, at the origin
  Mat3 align_rot = Mat3::Identity();
  double radius = 0.0;  // model units, before normalization
  std::vector<std::size_t> neighbor_indices;
};

struct GlobalSet {
  std::vector<Vec3> points;  // (p - p_query) / scale, not yet rotated
  std::vector<std::size_t> source_indices;
  std::vector<double> weights_used;
};

inline constexpr double kGlobalWeightFloor = 0.05;

/// Sampling weight of every point for query `i`: 1 - 1.5 d/d_max clamped to
/// [0.05, 1], with points of `forced` pinned to 1.
inline std::vector<double> global_weights(const PointCloud& cloud, std::size_t i,
                                          const std::vector<std::size_t>& forced) {
  const auto& pts = cloud.points();
  if (i >= pts.size()) throw Error(ErrorKind::size, "query index out of range");
  const Vec3& pi = pts[i];
  std::vector<double> dist(pts.size());
  double dmax = 0.0;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    dist[j] = (pts[j] - pi).norm();
    dmax = std::max(dmax, dist[j]);
  }
  if (!(dmax > 0.0)) throw Error(ErrorKind::degenerate, "all points coincide with the query");
  std::vector<double> w(pts.size());
  for (std::size_t j = 0; j < pts.size(); ++j) {
    w[j] = std::clamp(1.0 - 1.5 * dist[j] / dmax, kGlobalWeightFloor, 1.0);
  }
  for (auto j : forced) {
    if (j >= pts.size()) throw Error(ErrorKind::size, "forced index out of range");
    w[j] = 1.0;
  }
  return w;
}

/// Draws `count` distinct indices, each draw proportional to its weight
/// (exponential keys -ln(u)/w; the `count` smallest keys win).
inline std::vector<std::size_t> weighted_sample_without_replacement(const std::vector<double>& weights,
                                                                    std::size_t count, Rng& rng) {
  if (count > weights.size()) {
    throw Error(ErrorKind::size, "cannot draw " + std::to_string(count) + " of " +
                                     std::to_string(weights.size()));
  }
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<std::pair<double, std::size_t>> keys(weights.size());
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (!(weights[j] > 0.0)) throw Error(ErrorKind::parameter, "sampling weights must be positive");
    double u = uni(rng);
    if (u <= 0.0) u = std::numeric_limits<double>::min();
    keys[j] = {-std::log(u) / weights[j], j};
  }
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count), keys.end());
  std::vector<std::size_t> out(count);
  for (std::size_t j = 0; j < count; ++j) out[j] = keys[j].second;
  return out;
}

/// Global context for query `i`: a uniformly drawn forced set raises some
/// weights to 1, then `count` points are drawn without replacement.
inline GlobalSet sample_global(const PointCloud& cloud, std::size_t i, std::size_t count, Rng& rng) {
  const std::size_t n = cloud.size();
  if (count > n) {
    throw Error(ErrorKind::size, "global set size " + std::to_string(count) + " exceeds point count " +
                                     std::to_string(n));
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> forced;
  forced.reserve(count);
  std::sample(all.begin(), all.end(), std::back_inserter(forced), static_cast<std::ptrdiff_t>(count), rng);

  const auto w = global_weights(cloud, i, forced);
  GlobalSet g;
  g.source_indices = weighted_sample_without_replacement(w, count, rng);
  const Vec3& pi = cloud.point(i);
  const double s = cloud.scale();
  g.points.reserve(count);
  g.weights_used.reserve(count);
  for (auto j : g.source_indices) {
    g.points.push_back((cloud.point(j) - pi) / s);
    g.weights_used.push_back(w[j]);
  }
  return g;
}

/// Centers on the centroid and rotates into the PCA frame.
/// Rows of the result are `(p - centroid) * A^T`.
inline std::pair<std::vector<Vec3>, Mat3> pca_align(const std::vector<Vec3>& pts) {
  const PcaFrame f = pca_frame(pts);
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(f.rotation * (p - f.centroid));
  return {std::move(out), f.rotation};
}

/// kNN patch of size r around point i, centered on the query, scaled to unit
/// radius, and rotated by the PCA frame of the neighborhood.
inline Patch sample_local_patch(const PointCloud& cloud, const KdIndex& index, std::size_t i,
                                std::size_t r) {
  if (i >= cloud.size()) throw Error(ErrorKind::size, "query index out of range");
  if (r == 0) throw Error(ErrorKind::size, "patch size must be positive");
  const Vec3& pi = cloud.point(i);
  auto nb = index.knn(pi, r);
  // Coincident points may precede the query in tie order; keep it first.
  auto self = std::find(nb.begin(), nb.end(), i);
  if (self == nb.end()) {
    nb.back() = i;
    self = nb.end() - 1;
  }
  std::rotate(nb.begin(), self, self + 1);

  Patch patch;
  patch.query_index = i;
  patch.neighbor_indices = nb;
  patch.local_points.reserve(r);
  double radius = 0.0;
  for (auto j : nb) {
    patch.local_points.push_back(cloud.point(j) - pi);
    radius = std::max(radius, patch.local_points.back().norm());
  }
  patch.radius = radius;
  if (radius > 0.0) {
    for (auto& p : patch.local_points) p /= radius;
  } else if (r >= 3) {
    throw Error(ErrorKind::degenerate, "patch points coincide");
  }
  if (r < 3) return patch;  // too few points to define a frame

  patch.align_rot = pca_frame(patch.local_points).rotation;
  for (auto& p : patch.local_points) p = patch.align_rot * p;
  return patch;
}

}  // namespace cwn
