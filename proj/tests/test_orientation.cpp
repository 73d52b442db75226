#include <gtest/gtest.h>

#include "support.hpp"

using namespace cwn;
using namespace cwn::test;

namespace {
double agreement(const std::vector<Vec3>& got, const std::vector<Vec3>& want) {
  std::size_t same = 0;
  for (std::size_t i = 0; i < got.size(); ++i) same += got[i].dot(want[i]) > 0;
  const double f = double(same) / got.size();
  return std::max(f, 1.0 - f);
}

PointCloud flipped_sphere(std::size_t n, std::uint64_t seed) {
  PointCloud c = sphere(n, seed);
  std::vector<Vec3> nr = c.normals();
  std::mt19937_64 g(seed + 1);
  std::bernoulli_distribution coin(0.5);
  for (auto& v : nr)
    if (coin(g)) v = -v;
  c.set_normals(nr);
  return c;
}
}  // namespace

TEST(Orientation, SingleEdge) {
  PointCloud c(std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}});
  c.set_normals({Vec3::UnitZ(), -Vec3::UnitZ()});
  const auto f = mst_orient(c, 2);
  EXPECT_EQ(f.normals[0], Vec3::UnitZ());
  EXPECT_EQ(f.normals[1], Vec3::UnitZ());
}

TEST(Orientation, SphereRandomFlips) {
  const PointCloud c = flipped_sphere(3000, 301);
  const PointCloud truth = sphere(3000, 301);
  const auto f = mst_orient(c);
  EXPECT_EQ(f.components, 1u);
  EXPECT_GE(agreement(f.normals, truth.normals()), 0.99);
}

TEST(Orientation, ConsistentFieldUnchanged) {
  const PointCloud c = sphere(1500, 302);
  const auto f = mst_orient(c);
  EXPECT_EQ(f.normals, c.normals());
  PointCloud inward = c;
  std::vector<Vec3> nr = c.normals();
  for (auto& v : nr) v = -v;
  inward.set_normals(nr);
  EXPECT_EQ(mst_orient(inward).normals, c.normals());
}

TEST(Orientation, InvariantUnderInitialFlips) {
  const PointCloud c1 = flipped_sphere(2000, 303);
  PointCloud c2 = c1;
  std::vector<Vec3> nr = c1.normals();
  std::mt19937_64 g(304);
  std::bernoulli_distribution coin(0.3);
  for (auto& v : nr)
    if (coin(g)) v = -v;
  c2.set_normals(nr);
  EXPECT_EQ(mst_orient(c1).normals, mst_orient(c2).normals);
}

TEST(Orientation, DisconnectedComponents) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 20; ++i) pts.push_back(Vec3(0.01 * i, 0, 0));
  for (int i = 0; i < 20; ++i) pts.push_back(Vec3(100 + 0.01 * i, 0, 0));
  PointCloud c(pts);
  std::vector<Vec3> nr(40, Vec3::UnitZ());
  for (int i = 0; i < 40; i += 3) nr[i] = -nr[i];
  c.set_normals(nr);
  const auto f = mst_orient(c, 3);
  EXPECT_EQ(f.components, 2u);
  for (const auto& v : f.normals) EXPECT_EQ(v, Vec3::UnitZ());
}

TEST(Orientation, DegreeTooSmall) { EXPECT_THROW(mst_orient(sphere(200, 305), 1), Error); }

TEST(Orientation, SignCorrect) {
  OrientedField ref;
  ref.normals = {Vec3::UnitZ(), Vec3::UnitZ(), Vec3::UnitX()};
  const std::vector<Vec3> pred{Vec3(0, 0.2, 0.9), Vec3(0, 0.2, -0.9), Vec3(0, 1, 0)};
  const auto out = sign_correct(pred, ref);
  EXPECT_EQ(out[0], pred[0]);
  EXPECT_EQ(out[1], Vec3(-pred[1]));
  EXPECT_EQ(out[2], pred[2]);
  EXPECT_EQ(sign_correct(out, ref), out);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_GE(out[i].dot(ref.normals[i]), 0.0);
  EXPECT_THROW(sign_correct({Vec3::UnitZ()}, ref), Error);
}

TEST(Orientation, SignCorrectKeepsUnorientedError) {
  const PointCloud truth = sphere(1000, 306);
  const PointCloud noisy = flipped_sphere(1000, 307);
  const auto pred = baseline_normals(add_noise(truth, 0.004, 308), BaselineMethod::pca, 16).normals;
  const auto fixed = sign_correct(pred, mst_orient(noisy));
  EXPECT_EQ(angle_errors(pred, truth.normals(), AngleMode::unoriented),
            angle_errors(fixed, truth.normals(), AngleMode::unoriented));
}

TEST(Orientation, ReferenceFieldFile) {
  const auto dir = temp_dir("orient_ref");
  const PointCloud c = sphere(300, 309);
  std::vector<Vec3> scaled = c.normals();
  for (auto& v : scaled) v *= 2.0;
  io::save_normals((dir / "ref.normals").string(), scaled);
  const auto f = load_reference_field((dir / "ref.normals").string(), c);
  EXPECT_EQ(f.source, OrientedField::Source::external_file);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR((f.normals[i] - c.normal(i)).norm(), 0.0, 1e-15);

  std::vector<Vec3> shorter(c.normals().begin(), c.normals().end() - 1);
  io::save_normals((dir / "short.normals").string(), shorter);
  EXPECT_THROW(load_reference_field((dir / "short.normals").string(), c), Error);

  const auto pred = baseline_normals(c, BaselineMethod::pca, 16).normals;
  const auto fixed = sign_correct(pred, f);
  EXPECT_DOUBLE_EQ(rmse(angle_errors(fixed, c.normals(), AngleMode::oriented)),
                   rmse(angle_errors(pred, c.normals(), AngleMode::unoriented)));
}
