#pragma once

// Training objective: two rotation regularizers (orthonormality, z-alignment
// of the labelled normal) and three confidence-weighted data terms (center
// sine loss, point-weight regression, neighbour-normal consistency).

#include <algorithm>
#include <cmath>
#include <vector>

#include "cwn/autodiff/ops.hpp"
#include "cwn/error.hpp"
#include "cwn/model.hpp"
#include "cwn/point_cloud.hpp"

namespace cwn {

struct LossWeights {
  double l1 = 0.1;
  double l2 = 0.5;
  double l3 = 0.1;
  double l4 = 1.0;
  double l5 = 0.25;
};

/// `flip_invariant` scores each neighbour by min(|a-b|², |a+b|²); `literal`
/// uses |a-b|² as printed.
enum class NeighborForm { flip_invariant, literal };

/// How the weight-target bandwidth enters: `as_printed` computes
/// delta = max(0.05², 0.3·mean(h²)) and divides by delta²; `squared_inside`
/// treats that max as delta² itself.
enum class DeltaMode { as_printed, squared_inside };

struct LossOptions {
  LossWeights lambdas;
  NeighborForm neighbor_form = NeighborForm::flip_invariant;
  DeltaMode delta_mode = DeltaMode::as_printed;
};

/// Ground truth for one training sample, expressed in the patch PCA frame.
struct SampleTarget {
  Vec3 n_gt = Vec3::UnitZ();
  std::vector<Vec3> neighbor_gt;
  double confidence = 1.0;
  std::vector<Vec3> patch_points_m;
};

struct LossBreakdown {
  Tensor l1, l2, l3, l4, l5;
  Tensor total;
  LossWeights lambdas;
};

namespace detail {
inline void require_nondegenerate_rows(const Tensor& t, const char* what) {
  for (std::size_t i = 0; i < t.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < t.cols(); ++j) s += t(i, j) * t(i, j);
    if (std::sqrt(s) < ad::kNormGuard) throw Error(ErrorKind::degenerate, std::string("zero-length ") + what);
  }
}
inline Tensor row3(const Vec3& v) { return ad::constant(1, 3, {v.x(), v.y(), v.z()}); }
}  // namespace detail

/// |I - R Rᵀ|² (Frobenius).
inline Tensor loss_rotation_reg(const Tensor& rot) {
  if (rot.rows() != 3 || rot.cols() != 3) throw Error(ErrorKind::shape, "rotation must be 3x3, got " + rot.shape_str());
  return ad::sum(ad::square(ad::sub(Tensor::identity(3), ad::matmul(rot, ad::transpose(rot)))));
}

/// |(n_gt · R) × z|, n_gt a 1x3 row.
inline Tensor loss_z_align(const Tensor& n_gt, const Tensor& rot) {
  detail::require_nondegenerate_rows(n_gt, "ground-truth normal");
  const Tensor z = ad::constant(1, 3, {0.0, 0.0, 1.0});
  return ad::l2norm_rows(ad::cross3(ad::matmul(n_gt, rot), z));
}

/// c · |n_pred × n_gt|.
inline Tensor loss_center(const Tensor& n_pred, const Tensor& n_gt, double c) {
  detail::require_nondegenerate_rows(n_pred, "predicted normal");
  detail::require_nondegenerate_rows(n_gt, "ground-truth normal");
  return ad::scalar_mul(ad::l2norm_rows(ad::cross3(n_pred, n_gt)), c);
}

/// Target point weights exp(-(p·n)² / bandwidth) for the M patch points.
inline std::vector<double> weight_targets(const std::vector<Vec3>& pts, const Vec3& n_gt, DeltaMode mode) {
  if (pts.empty()) throw Error(ErrorKind::size, "weight loss needs M >= 1 points");
  std::vector<double> h2(pts.size());
  double mean_h2 = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double h = pts[k].dot(n_gt);
    h2[k] = h * h;
    mean_h2 += h2[k];
  }
  mean_h2 /= static_cast<double>(pts.size());
  const double delta = std::max(0.05 * 0.05, 0.3 * mean_h2);
  const double denom = mode == DeltaMode::as_printed ? delta * delta : delta;
  std::vector<double> w(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) w[k] = std::exp(-h2[k] / denom);
  return w;
}

/// c · mean_k (w_pred_k - w_gt_k)².
inline Tensor loss_weight(const Tensor& w_pred, const std::vector<Vec3>& pts, const Vec3& n_gt, double c,
                          DeltaMode mode = DeltaMode::as_printed) {
  if (w_pred.size() != pts.size() || pts.empty()) {
    throw Error(ErrorKind::size, "weight loss: " + std::to_string(w_pred.size()) + " predictions for " +
                                     std::to_string(pts.size()) + " points");
  }
  const Tensor target = ad::constant(pts.size(), 1, weight_targets(pts, n_gt, mode));
  const Tensor pred = w_pred.cols() == 1 ? w_pred : ad::transpose(w_pred);
  return ad::scalar_mul(ad::mean(ad::square(ad::sub(pred, target))), c);
}

/// c · Σ_k w_k · d(n_pred_k, n_gt_k).
inline Tensor loss_neighbor(const Tensor& pred, const Tensor& gt, const Tensor& w_pred, double c,
                            NeighborForm form = NeighborForm::flip_invariant) {
  if (pred.rows() != gt.rows() || pred.cols() != 3 || gt.cols() != 3 || w_pred.size() != pred.rows()) {
    throw Error(ErrorKind::size, "neighbor loss: mismatched sets " + pred.shape_str() + ", " + gt.shape_str() + ", " +
                                     w_pred.shape_str());
  }
  const Tensor diff = ad::sub(pred, gt);
  Tensor d = ad::dot_rows(diff, diff);
  if (form == NeighborForm::flip_invariant) {
    const Tensor flip = ad::add(pred, gt);
    d = ad::minimum(d, ad::dot_rows(flip, flip));
  }
  const Tensor w = w_pred.cols() == 1 ? w_pred : ad::transpose(w_pred);
  return ad::scalar_mul(ad::sum(ad::mul(w, d)), c);
}

inline Tensor total_loss(const Tensor& l1, const Tensor& l2, const Tensor& l3, const Tensor& l4, const Tensor& l5,
                         const LossWeights& lam = {}) {
  Tensor t = ad::scalar_mul(l1, lam.l1);
  t = ad::add(t, ad::scalar_mul(l2, lam.l2));
  t = ad::add(t, ad::scalar_mul(l3, lam.l3));
  t = ad::add(t, ad::scalar_mul(l4, lam.l4));
  return ad::add(t, ad::scalar_mul(l5, lam.l5));
}

/// All five terms for one sample. Ground-truth vectors are carried into the
/// network frame through the predicted rotation (n·R), so gradients reach
/// the QSTN through every rotation-dependent term.
inline LossBreakdown compute_losses(const ModelOutput& out, const SampleTarget& target, const LossOptions& opt = {}) {
  const std::size_t m = out.neighbor_normals.rows();
  if (target.neighbor_gt.size() != m || target.patch_points_m.size() != m) {
    throw Error(ErrorKind::size, "target holds " + std::to_string(target.neighbor_gt.size()) +
                                     " neighbours, model predicts " + std::to_string(m));
  }
  if (!(target.confidence >= 0.0 && target.confidence <= 1.0)) {
    throw Error(ErrorKind::parameter, "confidence outside [0,1]");
  }
  const Tensor n_gt = detail::row3(target.n_gt);
  const Tensor n_gt_net = ad::matmul(n_gt, out.rotation);
  std::vector<double> nb;
  nb.reserve(3 * m);
  for (const auto& v : target.neighbor_gt) nb.insert(nb.end(), {v.x(), v.y(), v.z()});
  const Tensor nb_gt_net = ad::matmul(ad::constant(m, 3, std::move(nb)), out.rotation);

  LossBreakdown b;
  b.lambdas = opt.lambdas;
  b.l1 = loss_rotation_reg(out.rotation);
  b.l2 = loss_z_align(n_gt, out.rotation);
  b.l3 = loss_center(out.n_pred, n_gt_net, target.confidence);
  b.l4 = loss_weight(out.weights, target.patch_points_m, target.n_gt, target.confidence, opt.delta_mode);
  b.l5 = loss_neighbor(out.neighbor_normals, nb_gt_net, out.weights, target.confidence, opt.neighbor_form);
  b.total = total_loss(b.l1, b.l2, b.l3, b.l4, b.l5, opt.lambdas);
  return b;
}

}  // namespace cwn
