#include <gtest/gtest.h>

#include "support.hpp"

using namespace cwn;
using namespace cwn::ad;
using namespace cwn::test;

namespace {
Tensor row3(const Vec3& v, bool grad = false) { return Tensor::from(1, 3, {v.x(), v.y(), v.z()}, grad); }
Tensor rows(const std::vector<Vec3>& vs, bool grad = false) {
  std::vector<double> v;
  for (const auto& p : vs) v.insert(v.end(), {p.x(), p.y(), p.z()});
  return Tensor::from(vs.size(), 3, v, grad);
}
Tensor col(const std::vector<double>& v, bool grad = false) { return Tensor::from(v.size(), 1, v, grad); }
Tensor mat(const Mat3& m) {
  std::vector<double> v;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v.push_back(m(i, j));
  return Tensor::from(3, 3, v);
}
const Vec3 kTilt30(std::sin(std::numbers::pi / 6), 0.0, std::cos(std::numbers::pi / 6));
}  // namespace

TEST(Loss, RotationReg) {
  EXPECT_EQ(loss_rotation_reg(Tensor::identity(3)).item(), 0.0);
  EXPECT_EQ(loss_rotation_reg(mat(2.0 * Mat3::Identity())).item(), 27.0);
  std::mt19937_64 g(91);
  std::uniform_real_distribution<double> u(-1, 1);
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = u(g);
  EXPECT_NEAR(loss_rotation_reg(mat(m)).item(), (Mat3::Identity() - m * m.transpose()).squaredNorm(), 1e-12);
  EXPECT_THROW(loss_rotation_reg(Tensor::identity(2)), Error);
}

TEST(Loss, ZAlign) {
  const Tensor i3 = Tensor::identity(3);
  EXPECT_EQ(loss_z_align(row3(Vec3::UnitZ()), i3).item(), 0.0);
  EXPECT_EQ(loss_z_align(row3(Vec3::UnitX()), i3).item(), 1.0);
  EXPECT_NEAR(loss_z_align(row3(Vec3(1, 0, 1).normalized()), i3).item(), std::sqrt(0.5), 1e-15);
  EXPECT_THROW(loss_z_align(row3(Vec3::Zero()), i3), Error);
}

TEST(Loss, ZAlignRowConvention) {
  // n·R with R rotating x to z (as a row-vector product) aligns n = x.
  Mat3 r;
  r << 0, 0, 1, 0, 1, 0, -1, 0, 0;
  EXPECT_NEAR(loss_z_align(row3(Vec3::UnitX()), mat(r)).item(), 0.0, 1e-15);
}

TEST(Loss, Center) {
  const Vec3 n = Vec3(0.3, 0.4, 0.5).normalized();
  EXPECT_NEAR(loss_center(row3(n), row3(n), 0.8).item(), 0.0, 1e-15);
  EXPECT_EQ(loss_center(row3(Vec3::UnitX()), row3(Vec3::UnitY()), 1.0).item(), 1.0);
  EXPECT_NEAR(loss_center(row3(Vec3::UnitZ()), row3(kTilt30), 0.5).item(), 0.25, 1e-15);
  EXPECT_NEAR(loss_center(row3(-n), row3(n), 1.0).item(), 0.0, 1e-15);
}

TEST(Loss, WeightInPlane) {
  const std::vector<Vec3> pts{{0.5, 0, 0}, {0, -0.3, 0}, {0.1, 0.1, 0}};
  EXPECT_EQ(loss_weight(col({1, 1, 1}), pts, Vec3::UnitZ(), 0.9).item(), 0.0);
}

TEST(Loss, WeightDeltaAsPrinted) {
  const std::vector<Vec3> pts{{0.2, 0.1, 0.05}};
  const auto w = weight_targets(pts, Vec3::UnitZ(), DeltaMode::as_printed);
  EXPECT_NEAR(w[0] / std::exp(-0.0025 / (0.0025 * 0.0025)), 1.0, 1e-12);
  EXPECT_LT(w[0], 1e-170);
  const auto w2 = weight_targets(pts, Vec3::UnitZ(), DeltaMode::squared_inside);
  EXPECT_NEAR(w2[0], std::exp(-1.0), 1e-15);
}

TEST(Loss, WeightMatchesTargets) {
  const std::vector<Vec3> pts{{0.2, 0.1, 0.3}, {-0.4, 0.2, -0.1}, {0.0, 0.5, 0.02}};
  const Vec3 n = Vec3(0.1, 0.2, 1.0).normalized();
  const auto w = weight_targets(pts, n, DeltaMode::as_printed);
  EXPECT_NEAR(loss_weight(col(w), pts, n, 0.3).item(), 0.0, 1e-30);
  const double want = 0.3 * ((0.5 - w[0]) * (0.5 - w[0]) + (0.5 - w[1]) * (0.5 - w[1]) + (0.5 - w[2]) * (0.5 - w[2])) / 3;
  EXPECT_NEAR(loss_weight(col({0.5, 0.5, 0.5}), pts, n, 0.3).item(), want, 1e-15);
  EXPECT_THROW(loss_weight(col({0.5}), {}, n, 1.0), Error);
}

TEST(Loss, Neighbor) {
  const std::vector<Vec3> gt{Vec3::UnitZ(), Vec3(1, 1, 0).normalized()};
  std::vector<Vec3> neg;
  for (const auto& v : gt) neg.push_back(-v);
  const Tensor w = col({1, 1});
  EXPECT_EQ(loss_neighbor(rows(gt), rows(gt), w, 1.0).item(), 0.0);
  EXPECT_EQ(loss_neighbor(rows(neg), rows(gt), w, 1.0).item(), 0.0);
  EXPECT_NEAR(loss_neighbor(rows(neg), rows(gt), w, 1.0, NeighborForm::literal).item(), 8.0, 1e-12);
  EXPECT_NEAR(loss_neighbor(rows({Vec3::UnitX()}), rows({Vec3::UnitZ()}), col({1}), 1.0).item(), 2.0, 1e-15);
  EXPECT_THROW(loss_neighbor(rows(gt), rows({Vec3::UnitX()}), w, 1.0), Error);
}

TEST(Loss, TotalWeights) {
  const Tensor one = Tensor::scalar(1.0);
  EXPECT_NEAR(total_loss(one, one, one, one, one).item(), 1.95, 1e-15);
  const Tensor zero = Tensor::scalar(0.0);
  EXPECT_EQ(total_loss(zero, zero, zero, zero, zero).item(), 0.0);
}

namespace {
struct Sample {
  ModelOutput out;
  SampleTarget target;
};
Sample make_sample_output(double c) {
  Sample s;
  s.out.rotation = Tensor::identity(3);
  s.out.n_pred = row3(Vec3(0.1, 0.2, 1).normalized());
  s.out.neighbor_normals = rows({Vec3(0, 0.3, 1).normalized(), Vec3(0.5, 0, 1).normalized()});
  s.out.weights = col({0.4, 0.7});
  s.target.n_gt = Vec3(-0.2, 0.1, 1).normalized();
  s.target.neighbor_gt = {Vec3::UnitZ(), Vec3(0, 1, 1).normalized()};
  s.target.patch_points_m = {Vec3(0.1, 0.2, 0.03), Vec3(-0.2, 0.1, -0.01)};
  s.target.confidence = c;
  return s;
}
}  // namespace

TEST(Loss, ConfidenceGatesDataTerms) {
  const Sample s0 = make_sample_output(0.0);
  const LossBreakdown b = compute_losses(s0.out, s0.target);
  EXPECT_EQ(b.l3.item(), 0.0);
  EXPECT_EQ(b.l4.item(), 0.0);
  EXPECT_EQ(b.l5.item(), 0.0);
  EXPECT_NEAR(b.total.item(), 0.1 * b.l1.item() + 0.5 * b.l2.item(), 1e-15);
  EXPECT_GT(b.l2.item(), 0.0);
}

TEST(Loss, ConfidenceScalesLinearly) {
  const Sample a = make_sample_output(1.0), h = make_sample_output(0.4);
  const LossBreakdown ba = compute_losses(a.out, a.target), bh = compute_losses(h.out, h.target);
  EXPECT_NEAR(bh.l3.item(), 0.4 * ba.l3.item(), 1e-15);
  EXPECT_NEAR(bh.l4.item(), 0.4 * ba.l4.item(), 1e-15);
  EXPECT_NEAR(bh.l5.item(), 0.4 * ba.l5.item(), 1e-15);
  EXPECT_EQ(bh.l2.item(), ba.l2.item());
}

TEST(Loss, FlipInvariantInGroundTruth) {
  Sample a = make_sample_output(0.7);
  Sample b = make_sample_output(0.7);
  b.target.n_gt = -b.target.n_gt;
  b.target.neighbor_gt[1] = -b.target.neighbor_gt[1];
  const LossBreakdown ba = compute_losses(a.out, a.target), bb = compute_losses(b.out, b.target);
  EXPECT_NEAR(ba.l2.item(), bb.l2.item(), 1e-15);
  EXPECT_NEAR(ba.l3.item(), bb.l3.item(), 1e-15);
  EXPECT_NEAR(ba.l5.item(), bb.l5.item(), 1e-15);
}

TEST(Loss, TermGradients) {
  Tensor n = row3(Vec3(0.3, -0.2, 0.9), true);
  Tensor nb = rows({Vec3(0.1, 0.2, 0.9), Vec3(0.7, 0.1, 0.3)}, true);
  Tensor w = col({0.3, 0.6}, true);
  Tensor r = Tensor::from(3, 3, {0.9, 0.1, -0.2, 0.05, 1.1, 0.3, 0.2, -0.1, 0.95}, true);
  const Tensor gt = row3(Vec3(0.1, 0.3, 1).normalized());
  const Tensor nb_gt = rows({Vec3(0, 0.3, 1).normalized(), Vec3(1, 0, 0.2).normalized()});
  const std::vector<Vec3> pts{{0.1, 0.2, 0.03}, {-0.2, 0.1, -0.04}};
  auto f = [&] {
    return total_loss(loss_rotation_reg(r), loss_z_align(gt, r), loss_center(normalize_rows(n), matmul(gt, r), 0.8),
                      loss_weight(w, pts, Vec3(0.1, 0.3, 1).normalized(), 0.8, DeltaMode::squared_inside),
                      loss_neighbor(normalize_rows(nb), matmul(nb_gt, r), w, 0.8));
  };
  EXPECT_LE(grad_check(f, {n, nb, w, r}, 1e-5).max_rel_error, 1e-6);
}
