#include <gtest/gtest.h>

#include "support.hpp"

using namespace cwn;
using namespace cwn::test;

namespace {
TrainShape shape_pair(ShapeKind kind, double noise, std::uint64_t seed, std::size_t n = 600) {
  ShapeSpec s;
  s.kind = kind;
  s.n_points = n;
  s.seed = seed;
  TrainShape t;
  t.name = to_string(kind);
  t.clean = gen_shape(s);
  t.noisy = add_noise(*t.clean, noise, seed + 1);
  return t;
}

TrainConfig small_config(ConfidenceMode mode = ConfidenceMode::off) {
  TrainConfig c;
  c.mode = mode;
  c.samples_per_shape = 16;
  c.model.r = 16;
  c.model.r_prime = 32;
  c.model.k_group = 8;
  c.model.m_weight = 8;
  c.batch = 8;
  c.epochs = 2;
  return c;
}

double mean_confidence(const std::vector<TrainSample>& s) {
  double m = 0;
  for (const auto& x : s) m += x.target.confidence;
  return m / s.size();
}
}  // namespace

TEST(Trainer, ModeOffUsesAnnotations) {
  const std::vector<TrainShape> shapes{shape_pair(ShapeKind::sphere, 0.0, 201)};
  const TrainConfig cfg = small_config();
  const auto samples = build_samples(shapes, cfg);
  ASSERT_EQ(samples.size(), 16u);
  const KdIndex idx(shapes[0].noisy);
  for (const auto& s : samples) {
    EXPECT_EQ(s.target.confidence, 1.0);
    const Patch p = sample_local_patch(shapes[0].noisy, idx, s.query, cfg.model.r);
    EXPECT_LE((s.target.n_gt - p.align_rot * shapes[0].noisy.normal(s.query)).norm(), 1e-12);
  }
}

TEST(Trainer, SurfaceOnCleanDataIsOne) {
  const std::vector<TrainShape> shapes{shape_pair(ShapeKind::torus, 0.0, 202)};
  for (const auto& s : build_samples(shapes, small_config(ConfidenceMode::surface))) {
    EXPECT_EQ(s.target.confidence, 1.0);
  }
}

TEST(Trainer, NormalConfidenceFallsWithNoise) {
  TrainConfig cfg = small_config(ConfidenceMode::normal);
  cfg.samples_per_shape = 200;
  const auto lo = build_samples({shape_pair(ShapeKind::sphere, 0.0012, 203)}, cfg);
  const auto hi = build_samples({shape_pair(ShapeKind::sphere, 0.012, 203)}, cfg);
  EXPECT_LT(mean_confidence(hi), mean_confidence(lo));
}

TEST(Trainer, CorrectedGroundTruth) {
  TrainShape t = shape_pair(ShapeKind::saddle, 0.006, 204);
  corrupt_labels(t.noisy, 0.5, 205);
  const TrainConfig cfg = small_config(ConfidenceMode::corrected_gt);
  const auto samples = build_samples({t}, cfg);
  const KdIndex idx(t.noisy), cidx(*t.clean);
  for (const auto& s : samples) {
    EXPECT_EQ(s.target.confidence, 1.0);
    const Patch p = sample_local_patch(t.noisy, idx, s.query, cfg.model.r);
    const Vec3 want = p.align_rot * nearest_surface_normal(t.noisy.point(s.query), *t.clean, cidx);
    EXPECT_LE((s.target.n_gt - want).norm(), 1e-12);
  }
}

TEST(Trainer, MissingCleanPair) {
  TrainShape t = shape_pair(ShapeKind::sphere, 0.006, 206);
  t.clean.reset();
  for (auto mode : {ConfidenceMode::surface, ConfidenceMode::normal, ConfidenceMode::corrected_gt}) {
    try {
      build_samples({t}, small_config(mode));
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::missing_data);
    }
  }
  EXPECT_NO_THROW(build_samples({t}, small_config(ConfidenceMode::off)));
}

namespace {
ModelParams two_params(std::vector<double> g) {
  ModelParams p;
  p.add("a", ad::Tensor::from(1, 2, {0.5, -1.0}, true));
  p.add("b", ad::Tensor::from(1, 1, {2.0}, true));
  p.zero_grad();
  auto& e = p.entries();
  e[0].tensor.node().grad = {g[0], g[1]};
  e[1].tensor.node().grad = {g[2]};
  return p;
}
}  // namespace

TEST(Trainer, AdamZeroGradient) {
  ModelParams p = two_params({0, 0, 0});
  AdamState st;
  adam_step(p, st, 0.01);
  EXPECT_EQ(p.entries()[0].tensor.values(), (std::vector<double>{0.5, -1.0}));
  EXPECT_EQ(p.entries()[1].tensor.values(), (std::vector<double>{2.0}));
}

TEST(Trainer, AdamOneStepClosedForm) {
  const double lr = 0.0009;
  const std::vector<double> g{0.3, -2.0, 1e-6};
  ModelParams p = two_params(g);
  AdamState st;
  adam_step(p, st, lr);
  // After one step the bias-corrected moments are g and g².
  auto upd = [&](double gi) { return -lr * gi / (std::abs(gi) + 1e-8); };
  EXPECT_NEAR(p.entries()[0].tensor.values()[0], 0.5 + upd(g[0]), 1e-15);
  EXPECT_NEAR(p.entries()[0].tensor.values()[1], -1.0 + upd(g[1]), 1e-15);
  EXPECT_NEAR(p.entries()[1].tensor.values()[0], 2.0 + upd(g[2]), 1e-15);
  EXPECT_EQ(st.step, 1u);
}

TEST(Trainer, AdamRejectsNonFinite) {
  ModelParams p = two_params({0.1, std::nan(""), 0});
  AdamState st;
  try {
    adam_step(p, st, 0.01);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::divergence);
  }
  EXPECT_EQ(p.entries()[0].tensor.values(), (std::vector<double>{0.5, -1.0}));
}

TEST(Trainer, ZeroLearningRateConstantCurve) {
  TrainConfig cfg = small_config();
  cfg.lr = 0.0;
  cfg.epochs = 4;
  const auto samples = build_samples({shape_pair(ShapeKind::sphere, 0.006, 207)}, cfg);
  cfg.batch = samples.size();
  const auto res = train(cfg, samples);
  ASSERT_EQ(res.loss_curve.size(), 4u);
  for (double v : res.loss_curve) EXPECT_NEAR(v, res.loss_curve[0], 1e-12 * std::abs(res.loss_curve[0]));
}

TEST(Trainer, DeterministicRuns) {
  const TrainConfig cfg = small_config();
  const auto samples = build_samples({shape_pair(ShapeKind::torus, 0.006, 208)}, cfg);
  const auto a = train(cfg, samples);
  const auto b = train(cfg, samples);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  auto& pa = const_cast<ModelParams&>(a.params).entries();
  auto& pb = const_cast<ModelParams&>(b.params).entries();
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k].tensor.values(), pb[k].tensor.values());
}

TEST(Trainer, UnitConfidenceMatchesOff) {
  const std::vector<TrainShape> shapes{shape_pair(ShapeKind::sphere, 0.0, 209)};
  const auto off = small_config(ConfidenceMode::off);
  const auto surf = small_config(ConfidenceMode::surface);
  EXPECT_EQ(train(off, build_samples(shapes, off)).loss_curve, train(surf, build_samples(shapes, surf)).loss_curve);
}

TEST(Trainer, DeskLossDrops) {
  TrainConfig cfg;
  cfg.samples_per_shape = 800;
  cfg.epochs = 2;
  const std::vector<TrainShape> shapes{shape_pair(ShapeKind::sphere, 0.0, 210, 2000),
                                       shape_pair(ShapeKind::saddle, 0.0, 211, 2000)};
  const auto res = train(cfg, build_samples(shapes, cfg));
  ASSERT_EQ(res.loss_curve.size(), 200u);
  auto mean = [&](std::size_t a, std::size_t b) {
    double s = 0;
    for (std::size_t i = a; i < b; ++i) s += res.loss_curve[i];
    return s / (b - a);
  };
  EXPECT_LT(mean(190, 200), 0.5 * mean(5, 16));
}

TEST(Trainer, LogAndCheckpoint) {
  const auto dir = temp_dir("trainer_log");
  TrainConfig cfg = small_config();
  cfg.log_path = (dir / "log.csv").string();
  cfg.checkpoint_path = (dir / "m.ckpt").string();
  const auto res = train(cfg, build_samples({shape_pair(ShapeKind::sphere, 0.0, 212)}, cfg));
  const std::string log = read_file(dir / "log.csv");
  EXPECT_EQ(log.rfind("step,epoch,l1,l2,l3,l4,l5,total\n", 0), 0u);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), static_cast<long>(res.loss_curve.size() + 1));
  const Checkpoint ck = load_checkpoint(cfg.checkpoint_path);
  auto& a = const_cast<ModelParams&>(res.params).entries();
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(ck.params.entries()[k].tensor.values(), a[k].tensor.values());
}

TEST(Trainer, ConfigFileAndOverrides) {
  const auto dir = temp_dir("trainer_cfg");
  write_file(dir / "a.cfg", "# desk run\nlr = 0.002\nbatch=4\nconfidence_mode = normal\n\nlambda3=0.7\nqstn=false\n");
  TrainConfig c = load_train_config((dir / "a.cfg").string());
  EXPECT_EQ(c.lr, 0.002);
  EXPECT_EQ(c.batch, 4u);
  EXPECT_EQ(c.mode, ConfidenceMode::normal);
  EXPECT_EQ(c.loss.lambdas.l3, 0.7);
  EXPECT_FALSE(c.model.use_qstn);
  apply_setting(c, "lr", "0.1");
  EXPECT_EQ(c.lr, 0.1);
  EXPECT_THROW(apply_setting(c, "nope", "1"), Error);
  EXPECT_THROW(apply_setting(c, "batch", "x"), Error);
  write_file(dir / "b.cfg", "lr 0.1\n");
  EXPECT_THROW(load_train_config((dir / "b.cfg").string()), Error);
  EXPECT_THROW(load_train_config((dir / "missing.cfg").string()), Error);
}
