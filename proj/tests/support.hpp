#pragma once

// Brute-force oracles and fixtures shared by the test suites.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cwn/cwn.hpp"

namespace cwn::test {

inline double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

inline std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  return pts;
}

/// Exhaustive kNN: ascending distance, ties by lower index.
inline std::vector<std::size_t> brute_knn(const std::vector<Vec3>& pts, const Vec3& q, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d(pts.size());
  for (std::size_t j = 0; j < pts.size(); ++j) d[j] = {(pts[j] - q).squaredNorm(), j};
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out(k);
  for (std::size_t j = 0; j < k; ++j) out[j] = d[j].second;
  return out;
}

inline std::pair<std::size_t, double> brute_nearest(const std::vector<Vec3>& pts, const Vec3& q) {
  std::size_t best = 0;
  double bd = (pts[0] - q).norm();
  for (std::size_t j = 1; j < pts.size(); ++j) {
    const double d = (pts[j] - q).norm();
    if (d < bd) {
      bd = d;
      best = j;
    }
  }
  return {best, bd};
}

inline Mat3 random_rotation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized().toRotationMatrix();
}

inline double unoriented_deg(const Vec3& a, const Vec3& b) {
  return deg(std::acos(std::clamp(std::abs(a.normalized().dot(b.normalized())), 0.0, 1.0)));
}

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cwn_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

inline PointCloud sphere(std::size_t n, std::uint64_t seed) {
  ShapeSpec spec;
  spec.kind = ShapeKind::sphere;
  spec.n_points = n;
  spec.seed = seed;
  return gen_shape(spec);
}

}  // namespace cwn::test
