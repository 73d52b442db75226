#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "cwn/autodiff/tensor.hpp"

namespace cwn::ad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::size_t worst_leaf = 0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients of the scalar `f()` with central
/// differences over every coordinate of `leaves`.
///
/// Error per coordinate is (|analytic - numeric| - res) / max(1e-8, |numeric|),
/// floored at 0, where res = 4u(|f| + 1)/eps is the roundoff resolution of
/// the central difference (u = machine epsilon).
/// Coordinates whose stencil [x - eps, x + eps] straddles a kink (ReLU
/// corner, max-pool switch, min switch) are excluded and counted. Kinks are
/// recognised by how difference quotients change with the step h. For smooth
/// f the gap between the one-sided slopes grows linearly in h, and the
/// central difference approaches its limit as h² (probed at eps/3 and
/// eps/10). A kink inside the stencil breaks one of these scalings (a
/// symmetric pair of kinks leaves the one-sided gap intact but not the
/// central one). The broken quantity must also be large enough to explain
/// the observed discrepancy. Probing only happens for coordinates whose
/// error exceeds `kink_probe_threshold`.
inline GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double eps = 1e-4,
                                  double kink_probe_threshold = 1e-6) {
  for (auto& t : leaves) t.zero_grad();
  const Tensor y = f();
  if (y.size() != 1) throw Error(ErrorKind::shape, "grad_check needs a scalar function, got " + y.shape_str());
  const double f0 = y.item();
  backward(y);

  auto eval = [&]() {
    NoGradGuard guard;
    return f().item();
  };

  // Central differences cannot resolve gradient differences below this.
  const double resolution = 4.0 * std::numeric_limits<double>::epsilon() * (std::abs(f0) + 1.0) / eps;
  GradCheckReport rep;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = leaves[li];
    const std::vector<double> analytic = leaf.grad();
    auto& vals = leaf.mutable_values();
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double x0 = vals[k];
      auto at = [&](double h) {
        vals[k] = x0 + h;
        const double v = eval();
        vals[k] = x0;
        return v;
      };
      const double fp = at(eps);
      const double fm = at(-eps);
      const double numeric = (fp - fm) / (2.0 * eps);
      const double diff = std::abs(analytic[k] - numeric);
      const double err = std::isnan(diff) ? std::numeric_limits<double>::infinity()
                                          : std::max(0.0, diff - resolution) / std::max(1e-8, std::abs(numeric));

      if (err > kink_probe_threshold) {
        const double h = 0.1 * eps;
        const double fph = at(h), fmh = at(-h);
        const double noise = 4.0 * std::numeric_limits<double>::epsilon() * (std::abs(f0) + 1.0) / h;
        // `big` observed at eps should equal `factor` times `small`, observed
        // at a finer step; `small` below the roundoff level only bounds it.
        auto breaks_scaling = [&](double big, double small, double factor) {
          const double ratio = big / (std::max(small, noise) * factor);
          const bool resolved = small > 10.0 * noise;
          return big >= 0.5 * diff && (ratio > 1.1 || (resolved && ratio < 0.9));
        };
        const double gap = std::abs((fp - f0) / eps - (f0 - fm) / eps);
        const double gap_h = std::abs((fph - f0) / h - (f0 - fmh) / h);
        bool kink = breaks_scaling(gap, gap_h, eps / h);
        if (!kink) {
          const double mid = eps / 3.0;
          const double d_h = (fph - fmh) / (2.0 * h);
          const double d_mid = (at(mid) - at(-mid)) / (2.0 * mid);
          kink = breaks_scaling(std::abs(numeric - d_h), std::abs(d_mid - d_h),
                                (eps * eps - h * h) / (mid * mid - h * h));
        }
        if (kink) {
          ++rep.skipped_kinks;
          continue;
        }
      }
      ++rep.checked;
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst_leaf = li;
        rep.worst_coord = k;
        rep.worst_analytic = analytic[k];
        rep.worst_numeric = numeric;
      }
    }
  }
  return rep;
}

/// Single-input form: `f` maps x to a scalar.
inline GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-4) {
  x.node().requires_grad = true;
  x.node().ensure_grad();
  return grad_check([&]() { return f(x); }, std::vector<Tensor>{x}, eps);
}

}  // namespace cwn::ad
