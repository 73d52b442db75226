#include <gtest/gtest.h>

#include "support.hpp"

using namespace cwn;
using namespace cwn::test;

namespace {
PointCloud grid_plane(double spacing, int half, double z = 0.0) {
  std::vector<Vec3> pts;
  for (int i = -half; i <= half; ++i)
    for (int j = -half; j <= half; ++j) pts.push_back(Vec3(i * spacing, j * spacing, z));
  PointCloud c(pts);
  c.set_normals(std::vector<Vec3>(pts.size(), Vec3::UnitZ()));
  return c;
}
}  // namespace

TEST(Confidence, SurfaceDistanceOnPoint) {
  const PointCloud c(random_points(100, 31));
  EXPECT_EQ(surface_distance(c.point(5), KdIndex(c)), 0.0);
}

TEST(Confidence, SurfaceDistanceAboveGrid) {
  const double spacing = 0.1;
  const PointCloud c = grid_plane(spacing, 10);
  const KdIndex idx(c);
  for (double h : {0.01, 0.05, 0.2}) {
    const Vec3 p(0.023, -0.041, h);
    const double d = surface_distance(p, idx);
    EXPECT_DOUBLE_EQ(d, brute_nearest(c.points(), p).second);
    EXPECT_LE(std::abs(d - h), spacing / 2);
  }
}

TEST(Confidence, SurfaceDistanceEmpty) {
  EXPECT_THROW(surface_distance(Vec3::Zero(), KdIndex(std::vector<Vec3>{})), Error);
}

TEST(Confidence, SurfaceConfidenceValues) {
  const double s = 2.7;
  EXPECT_EQ(surface_confidence(0.0, s, 0.05), 1.0);
  EXPECT_NEAR(surface_confidence(s * 0.05, s, 0.05), 0.36787944117144233, 1e-15);
  EXPECT_NEAR(surface_confidence(0.01 * s, s, 0.05), 0.81873075307798182, 1e-15);
  EXPECT_THROW(surface_confidence(0.1, 0.0, 0.05), Error);
  EXPECT_THROW(surface_confidence(0.1, 1.0, -1.0), Error);
}

TEST(Confidence, NearestSurfaceNormal) {
  const PointCloud plane = grid_plane(0.1, 5);
  const KdIndex idx(plane);
  EXPECT_EQ(nearest_surface_normal(Vec3(0.02, 0.03, 0.4), plane, idx), Vec3::UnitZ());

  PointCloud c = sphere(500, 32);
  const KdIndex sidx(c);
  EXPECT_EQ(nearest_surface_normal(c.point(9), c, sidx), c.normal(9));
  for (const auto& q : random_points(50, 33)) {
    EXPECT_EQ(nearest_surface_normal(q, c, sidx), c.normal(brute_nearest(c.points(), q).first));
  }
  c.clear_normals();
  try {
    nearest_surface_normal(Vec3::Zero(), c, sidx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_data);
  }
}

TEST(Confidence, NormalDiscrepancy) {
  const Vec3 n(0.3, -0.2, 0.9);
  EXPECT_NEAR(normal_discrepancy(n, n), 0.0, 1e-7);
  EXPECT_EQ(normal_discrepancy(Vec3::UnitX(), Vec3::UnitY()), 1.0);
  const double a = std::numbers::pi / 6;
  EXPECT_NEAR(normal_discrepancy(Vec3::UnitX(), Vec3(std::cos(a), std::sin(a), 0)), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(normal_discrepancy(n, -n), normal_discrepancy(n, n));
  EXPECT_THROW(normal_discrepancy(Vec3::Zero(), n), Error);
}

TEST(Confidence, NormalConfidenceValues) {
  EXPECT_EQ(normal_confidence(0.0, 0.06), 1.0);
  EXPECT_NEAR(normal_confidence(0.06, 0.06), 0.36787944117144233, 1e-15);
  EXPECT_NEAR(normal_confidence(1.0 / 3.0, 0.06), 3.8659201394728076e-3, 1e-15);
  EXPECT_THROW(normal_confidence(1.5, 0.06), Error);
  EXPECT_THROW(normal_confidence(-0.1, 0.06), Error);
}

TEST(Confidence, StrictlyDecreasing) {
  double prev_s = 2.0, prev_n = 2.0;
  for (double d = 0.0; d <= 1.0; d += 0.05) {
    const double cs = surface_confidence(d, 1.0, 0.05);
    const double cn = normal_confidence(d, 0.06);
    EXPECT_LT(cs, prev_s);
    EXPECT_LT(cn, prev_n);
    prev_s = cs;
    prev_n = cn;
  }
}

TEST(Confidence, AnnotateIdentical) {
  const PointCloud c = sphere(400, 34);
  for (const auto& r : annotate_dataset(c, c)) {
    EXPECT_EQ(r.c_surface, 1.0);
    EXPECT_EQ(r.c_normal, 1.0);
  }
}

TEST(Confidence, AnnotateOffsetPlane) {
  const double h = 0.004;
  const PointCloud clean = grid_plane(0.1, 10);
  const PointCloud noisy = grid_plane(0.1, 10, h);
  const double want = std::exp(-h / (noisy.scale() * 0.05));
  for (const auto& r : annotate_dataset(noisy, clean)) EXPECT_NEAR(r.c_surface, want, 1e-12);
}

TEST(Confidence, AnnotateRotatedLabels) {
  const PointCloud clean = sphere(1000, 35);
  PointCloud noisy = clean;
  const auto hit = corrupt_labels(noisy, 0.1, 36);
  ASSERT_EQ(hit.size(), 100u);
  const auto rec = annotate_dataset(noisy, clean);
  const double low = std::exp(-1.0 / 0.06);
  std::size_t count = 0;
  for (const auto& r : rec) {
    if (std::abs(r.c_normal - low) < 1e-9) ++count;
    else EXPECT_EQ(r.c_normal, 1.0);
  }
  EXPECT_EQ(count, hit.size());
  for (auto i : hit) EXPECT_NEAR(rec[i].c_normal, low, 1e-9);
}

TEST(Confidence, ScaleInvariantSurface) {
  const PointCloud clean = sphere(500, 37);
  const PointCloud noisy = add_noise(clean, 0.006, 38);
  auto scaled = [](const PointCloud& c, double k) {
    std::vector<Vec3> p = c.points();
    for (auto& v : p) v *= k;
    PointCloud out(p);
    out.set_normals(c.normals());
    return out;
  };
  const auto a = annotate_dataset(noisy, clean);
  const auto b = annotate_dataset(scaled(noisy, 4.0), scaled(clean, 4.0));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i].c_surface, b[i].c_surface, 1e-12);
}

TEST(Confidence, WritesFiles) {
  const auto dir = temp_dir("conf_files");
  const PointCloud c = sphere(200, 39);
  const auto files = write_confidences((dir / "x").string(), annotate_dataset(c, c));
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(io::load_conf(files[0]).size(), 200u);
  EXPECT_EQ(io::load_conf(files[1]).size(), 200u);
}
