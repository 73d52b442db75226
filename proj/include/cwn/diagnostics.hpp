#pragma once

// Finite-difference check of the full model and loss at micro scale.

#include <cmath>
#include <numbers>
#include <random>

#include "cwn/autodiff/grad_check.hpp"
#include "cwn/datagen.hpp"
#include "cwn/kd_index.hpp"
#include "cwn/loss.hpp"
#include "cwn/model.hpp"
#include "cwn/sampling.hpp"

namespace cwn {

/// One micro-scale (r = r' = 8) training sample with parameters.
struct MicroProblem {
  ModelConfig config;
  ModelParams params;
  ModelInput input;
  SampleTarget target;
  LossOptions options;

  ad::Tensor loss() const { return compute_losses(forward(input, params, config), target, options).total; }
};

/// A sample from a noisy sphere. Parameters are jittered off their
/// initialization: zero biases put the query row (at the origin) exactly on
/// every activation corner, where only one-sided derivatives exist. The
/// label is tilted 15° off the patch axis, since with n_gt on z the
/// alignment term |n_gt R x z| sits at the apex of a cone.
inline MicroProblem make_micro_problem(std::uint64_t seed = 1) {
  MicroProblem p;
  p.config = ModelConfig::micro(seed);
  p.params = init_params(p.config);
  std::mt19937_64 rng(seed ^ 0xa5a5a5a5ULL);
  {
    std::normal_distribution<double> nd(0.0, 0.01);
    for (auto& e : p.params.entries())
      for (auto& v : e.tensor.mutable_values()) v += nd(rng);
  }

  ShapeSpec spec;
  spec.kind = ShapeKind::sphere;
  spec.n_points = 200;
  spec.seed = seed;
  const PointCloud cloud = add_noise(gen_shape(spec), 0.006, seed + 1);
  const KdIndex index(cloud);
  const std::size_t query = seed % cloud.size();
  const Patch patch = sample_local_patch(cloud, index, query, p.config.r);
  Rng global_rng = query_rng(seed, query);
  const GlobalSet global = sample_global(cloud, query, p.config.r_prime, global_rng);
  p.input = make_input(patch, global, p.config);

  const Vec3 n = (patch.align_rot * cloud.normal(query)).normalized();
  const double tilt = 15.0 * std::numbers::pi / 180.0;
  p.target.n_gt = (std::cos(tilt) * n + std::sin(tilt) * random_perpendicular(n, rng)).normalized();
  p.target.confidence = 0.7;
  for (auto k : p.input.m_subset) {
    p.target.neighbor_gt.push_back((patch.align_rot * cloud.normal(patch.neighbor_indices[k])).normalized());
    p.target.patch_points_m.push_back(patch.local_points[k]);
  }
  return p;
}

struct MicroGradCheck {
  ad::GradCheckReport report;
  std::size_t parameter_count = 0;
  std::string worst_parameter;
};

/// Checks every parameter gradient of the micro problem against central
/// differences.
inline MicroGradCheck micro_grad_check(std::uint64_t seed = 1, double eps = 1e-4) {
  MicroProblem p = make_micro_problem(seed);
  MicroGradCheck res;
  res.parameter_count = p.params.parameter_count();
  res.report = ad::grad_check([&] { return p.loss(); }, p.params.tensors(), eps);
  res.worst_parameter = p.params.entries().at(res.report.worst_leaf).name;
  return res;
}

}  // namespace cwn
