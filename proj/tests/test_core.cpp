#include <gtest/gtest.h>

#include "support.hpp"

using namespace cwn;
using namespace cwn::test;

TEST(Core, LoadXyzTwoPoints) {
  auto dir = temp_dir("core_two");
  write_file(dir / "a.xyz", "0 0 0\n1 0 0\n");
  const PointCloud c = io::load_xyz((dir / "a.xyz").string());
  ASSERT_EQ(c.size(), 2u);
  EXPECT_DOUBLE_EQ(c.scale(), 1.0);
}

TEST(Core, LoadXyzReportsLine) {
  auto dir = temp_dir("core_bad");
  write_file(dir / "a.xyz", "0 0 0\n1 0 0\na b c\n");
  try {
    io::load_xyz((dir / "a.xyz").string());
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
}

TEST(Core, LoadXyzEmpty) {
  auto dir = temp_dir("core_empty");
  write_file(dir / "a.xyz", "");
  try {
    io::load_xyz((dir / "a.xyz").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_input);
  }
}

TEST(Core, ScaleMatchesBruteForceBox) {
  const auto pts = random_points(1000, 3, -2.0, 5.0);
  Vec3 lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const PointCloud c(pts);
  EXPECT_NEAR(c.scale(), (hi - lo).norm(), 1e-12);
}

TEST(Core, ScaleTranslationAndScaling) {
  auto pts = random_points(200, 4);
  const double s0 = PointCloud(pts).scale();
  for (auto& p : pts) p = 3.0 * p + Vec3(10, -4, 2);
  EXPECT_NEAR(PointCloud(pts).scale(), 3.0 * s0, 1e-12);
}

TEST(Core, RoundTripIsExact) {
  auto dir = temp_dir("core_rt");
  const auto pts = random_points(300, 5);
  io::save_xyz((dir / "a.xyz").string(), PointCloud(pts));
  const PointCloud back = io::load_xyz((dir / "a.xyz").string());
  ASSERT_EQ(back.size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(back.point(i), pts[i]);
}

TEST(Core, KnnCollinear) {
  const KdIndex idx(std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
  EXPECT_EQ(idx.knn(Vec3(0, 0, 0), 2), (std::vector<std::size_t>{0, 1}));
}

TEST(Core, KnnSelfQuery) {
  const auto pts = random_points(50, 6);
  const KdIndex idx(pts);
  const auto nb = idx.knn_with_distances(pts[17], 1);
  EXPECT_EQ(nb[0].index, 17u);
  EXPECT_EQ(nb[0].dist2, 0.0);
}

TEST(Core, KnnMatchesBruteForce) {
  const auto pts = random_points(500, 7);
  const KdIndex idx(pts);
  const auto qs = random_points(50, 8);
  for (const auto& q : qs) EXPECT_EQ(idx.knn(q, 16), brute_knn(pts, q, 16));
}

TEST(Core, KnnTiesByLowerIndex) {
  std::vector<Vec3> pts(40, Vec3(1, 1, 1));
  pts.push_back(Vec3(0, 0, 0));
  const KdIndex idx(pts);
  EXPECT_EQ(idx.knn(Vec3(1, 1, 1), 5), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Core, KnnTooLarge) {
  const KdIndex idx(random_points(5, 9));
  try {
    idx.knn(Vec3::Zero(), 6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::size);
  }
}

TEST(Core, NearestOnPoint) {
  const auto pts = random_points(100, 10);
  const auto [i, d] = KdIndex(pts).nearest(pts[42]);
  EXPECT_EQ(i, 42u);
  EXPECT_EQ(d, 0.0);
}

TEST(Core, NearestTieLowerIndex) {
  const KdIndex idx(std::vector<Vec3>{{1, 0, 0}, {-1, 0, 0}});
  EXPECT_EQ(idx.nearest(Vec3::Zero()).first, 0u);
}

TEST(Core, NearestMatchesLinearScan) {
  const auto pts = random_points(1000, 11);
  const KdIndex idx(pts);
  for (const auto& q : random_points(100, 12, -1.5, 1.5)) {
    const auto got = idx.nearest(q);
    const auto want = brute_nearest(pts, q);
    EXPECT_EQ(got.first, want.first);
    EXPECT_DOUBLE_EQ(got.second, want.second);
  }
}

TEST(Core, NearestEmpty) {
  const KdIndex idx(std::vector<Vec3>{});
  try {
    idx.nearest(Vec3::Zero());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_input);
  }
}

TEST(Core, NormalsMustBeUnit) {
  PointCloud c(random_points(2, 13));
  EXPECT_THROW(c.set_normals({Vec3(1, 0, 0), Vec3(2, 0, 0)}), Error);
  EXPECT_THROW(c.set_confidences({0.5, 1.5}), Error);
}
