// cwn: command-line front end for the normal-estimation pipeline.
//
// Exit codes: 0 success, 1 user error (bad flags, bad input), 2 internal
// failure (including training divergence).

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cwn/cwn.hpp"

namespace {

using namespace cwn;

template <typename E>
CLI::CheckedTransformer choice(const std::map<std::string, E>& m) {
  return CLI::CheckedTransformer(m, CLI::ignore_case);
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out_dir;
  std::vector<std::string> shapes{"sphere", "torus", "saddle"};
  std::vector<double> noise{0.0};
  std::size_t points = 2000;
  std::uint64_t seed = 1;
  std::string density;
  double corrupt = 0.0;
  bool corrupt_random = false;
  std::optional<double> corrupt_min_noise;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Generate synthetic noisy/clean shape pairs and a manifest");
  c->add_option("--out", a.out_dir, "Output directory (receives manifest.txt)")->required();
  c->add_option("--shapes", a.shapes, "Shape kinds: sphere, torus, saddle")->delimiter(',')->capture_default_str();
  c->add_option("--noise", a.noise, "Noise levels as fractions of the bounding-box diagonal")
      ->delimiter(',')
      ->capture_default_str();
  c->add_option("--points", a.points, "Points per clean shape")->capture_default_str();
  c->add_option("--seed", a.seed, "Random seed")->capture_default_str();
  c->add_option("--density", a.density, "Density variant: striped or gradient");
  c->add_option("--corrupt", a.corrupt, "Fraction of labels replaced by 90-degree rotated normals")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  c->add_flag("--corrupt-random", a.corrupt_random,
              "Pick corrupted labels at random (default: the points displaced farthest from the surface)");
  c->add_option("--corrupt-min-noise", a.corrupt_min_noise,
                "Corrupt only clouds at or above this noise level (default: the highest level given)");
}

int run_synth(const SynthArgs& a) {
  SynthSpec spec;
  spec.kinds.clear();
  for (const auto& s : a.shapes) spec.kinds.push_back(parse_shape_kind(s));
  spec.noise_levels = a.noise;
  spec.n_points = a.points;
  spec.seed = a.seed;
  if (!a.density.empty()) spec.density = parse_density_mode(a.density);
  spec.corrupt_fraction = a.corrupt;
  spec.corrupt_random = a.corrupt_random;
  spec.corrupt_min_noise = a.corrupt_min_noise.value_or(*std::max_element(a.noise.begin(), a.noise.end()));
  const auto shapes = synth_dataset(spec);
  const std::string manifest = write_dataset(a.out_dir, shapes);
  for (const auto& s : shapes) {
    std::cout << s.name << ": " << s.noisy.size() << " points";
    if (!s.corrupted.empty()) std::cout << ", " << s.corrupted.size() << " corrupted labels";
    std::cout << '\n';
  }
  std::cout << "manifest: " << manifest << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// confidence

struct ConfidenceArgs {
  std::string xyz, normals, clean_xyz, clean_normals, out;
  ConfidenceOutput which = ConfidenceOutput::both;
  double sigma_s = kDefaultSigmaSurface;
  double sigma_n = kDefaultSigmaNormal;
};

void add_confidence(CLI::App& app, ConfidenceArgs& a) {
  auto* c = app.add_subcommand("confidence", "Per-point surface/normal confidences of a noisy cloud");
  c->add_option("--xyz", a.xyz, "Noisy points (.xyz)")->required();
  c->add_option("--normals", a.normals, "Annotated normals of the noisy points (.normals)")->required();
  c->add_option("--clean-xyz", a.clean_xyz, "Clean points (.xyz)")->required();
  c->add_option("--clean-normals", a.clean_normals, "Clean normals (.normals)")->required();
  c->add_option("--out", a.out, "Output prefix: <out>.surface.conf, <out>.normal.conf")->required();
  c->add_option("--mode", a.which, "Which confidences to write: surface, normal, both")
      ->transform(choice(std::map<std::string, ConfidenceOutput>{{"surface", ConfidenceOutput::surface},
                                                                 {"normal", ConfidenceOutput::normal},
                                                                 {"both", ConfidenceOutput::both}}))
      ->default_str("both");
  c->add_option("--sigma-s", a.sigma_s, "Surface bandwidth (fraction of the diagonal)")->capture_default_str();
  c->add_option("--sigma-n", a.sigma_n, "Normal bandwidth (normalized angle)")->capture_default_str();
}

int run_confidence(const ConfidenceArgs& a) {
  const PointCloud noisy = io::load_xyz_with_normals(a.xyz, a.normals);
  const PointCloud clean = io::load_xyz_with_normals(a.clean_xyz, a.clean_normals);
  const auto rec = annotate_dataset(noisy, clean, a.sigma_s, a.sigma_n);
  for (const auto& path : write_confidences(a.out, rec, a.which)) std::cout << "wrote " << path << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config_path;
  std::string data;
  std::string out;
  std::string log;
  std::vector<std::string> settings;
  std::optional<double> lr;
  std::optional<std::size_t> epochs, batch, samples;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::string init;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train the two-branch model on a synthetic dataset");
  c->add_option("--data", a.data, "Dataset manifest written by synth")->required();
  c->add_option("--out", a.out, "Checkpoint path, rewritten after every epoch")->required();
  c->add_option("--config", a.config_path, "key=value config file");
  c->add_option("--log", a.log, "Loss log (CSV: step,epoch,l1,l2,l3,l4,l5,total)");
  c->add_option("--set", a.settings, "Extra key=value setting (repeatable, overrides the config file)");
  c->add_option("--lr", a.lr, "Learning rate (default 0.0009)");
  c->add_option("--epochs", a.epochs, "Epochs (default 50)");
  c->add_option("--batch", a.batch, "Batch size (default 16)");
  c->add_option("--samples-per-shape", a.samples, "Training queries per shape (default 64)");
  c->add_option("--confidence-mode", a.mode, "off, surface, normal or corrected_gt (default off)");
  c->add_option("--seed", a.seed, "Sampling and shuffling seed (default 1)");
  c->add_option("--init", a.init, "Start from this checkpoint instead of a fresh initialization");
}

TrainConfig resolve_train_config(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config_path.empty()) cfg = load_train_config(a.config_path, cfg);
  for (const auto& s : a.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::parameter, "--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (a.lr) cfg.lr = *a.lr;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch) cfg.batch = *a.batch;
  if (a.samples) cfg.samples_per_shape = *a.samples;
  if (a.mode) cfg.mode = parse_confidence_mode(*a.mode);
  if (a.seed) cfg.seed = *a.seed;
  cfg.checkpoint_path = a.out;
  if (!a.log.empty()) cfg.log_path = a.log;
  return cfg;
}

int run_train(const TrainArgs& a) {
  TrainConfig cfg = resolve_train_config(a);
  std::optional<ModelParams> init;
  if (!a.init.empty()) {
    Checkpoint ck = load_checkpoint(a.init);
    cfg.model = ck.config;
    init = std::move(ck.params);
  }
  const auto shapes = load_shapes(a.data);
  const auto samples = build_samples(shapes, cfg);
  std::cout << samples.size() << " samples from " << shapes.size() << " shapes, confidence mode "
            << to_string(cfg.mode) << '\n';
  const TrainResult res = train(cfg, samples, std::move(init));
  if (!res.log.empty()) {
    const auto& last = res.log.back();
    std::cout << "steps " << res.log.size() << ", final loss " << io::format_real(last.total) << '\n';
  }
  std::cout << "checkpoint: " << cfg.checkpoint_path << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// infer

struct InferArgs {
  std::string checkpoint, xyz, pidx, out;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
};

void add_infer(CLI::App& app, InferArgs& a) {
  auto* c = app.add_subcommand("infer", "Predict unoriented normals with a trained checkpoint");
  c->add_option("--checkpoint", a.checkpoint, "Model checkpoint")->required();
  c->add_option("--xyz", a.xyz, "Input points (.xyz)")->required();
  c->add_option("--pidx", a.pidx, "Query subset (.pidx); default: every point");
  c->add_option("--out", a.out, "Output normals, one line per query (.normals)")->required();
  c->add_option("--seed", a.seed, "Global-sampling seed")->capture_default_str();
  c->add_option("--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

int run_infer(const InferArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const PointCloud cloud = io::load_xyz(a.xyz);
  std::vector<std::size_t> queries;
  if (a.pidx.empty()) {
    queries.resize(cloud.size());
    std::iota(queries.begin(), queries.end(), std::size_t{0});
  } else {
    queries = io::load_pidx(a.pidx);
    for (auto q : queries) {
      if (q >= cloud.size()) {
        throw Error(ErrorKind::size, a.pidx + ": index " + std::to_string(q) + " out of range for " +
                                         std::to_string(cloud.size()) + " points");
      }
    }
  }
  const auto normals = infer_normals(cloud, queries, ck.params, ck.config, a.seed, a.jobs);
  io::save_normals(a.out, normals);
  std::cout << "wrote " << normals.size() << " normals to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// baseline

struct BaselineArgs {
  std::string xyz, out;
  std::size_t k = 0;
  unsigned jobs = 1;
};

void add_baseline(CLI::App& app, BaselineArgs& a, CLI::App*& pca, CLI::App*& jet) {
  auto* c = app.add_subcommand("baseline", "Classical normal estimators");
  c->require_subcommand(1);
  pca = c->add_subcommand("pca", "Plane fit to the k nearest neighbours");
  jet = c->add_subcommand("jet", "Order-2 height-field fit to the k nearest neighbours");
  for (auto* s : {pca, jet}) {
    s->add_option("--xyz", a.xyz, "Input points (.xyz)")->required();
    s->add_option("--out", a.out, "Output normals (.normals)")->required();
    s->add_option("--k", a.k, "Neighbourhood size (default 32 for pca, 24 for jet)");
    s->add_option("--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  }
}

int run_baseline(const BaselineArgs& a, BaselineMethod method) {
  const PointCloud cloud = io::load_xyz(a.xyz);
  const std::size_t k = a.k ? a.k : (method == BaselineMethod::pca ? 32 : 24);
  const auto res = baseline_normals(cloud, method, k, a.jobs);
  if (res.fallbacks) {
    std::cerr << "warning: " << res.fallbacks << " ill-conditioned jet fits fell back to the PCA normal\n";
  }
  io::save_normals(a.out, res.normals);
  std::cout << "wrote " << res.normals.size() << " normals to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// orient

struct OrientArgs {
  std::string xyz, normals, out, pred, ref, ref_xyz;
  std::size_t k = kDefaultOrientDegree;
};

void add_orient(CLI::App& app, OrientArgs& a, CLI::App*& mst, CLI::App*& correct) {
  auto* c = app.add_subcommand("orient", "Normal orientation");
  c->require_subcommand(1);
  mst = c->add_subcommand("mst", "Orient normals by propagation along a minimum spanning tree");
  mst->add_option("--xyz", a.xyz, "Input points (.xyz)")->required();
  mst->add_option("--normals", a.normals, "Unoriented normals (.normals)")->required();
  mst->add_option("--out", a.out, "Oriented normals (.normals)")->required();
  mst->add_option("--k", a.k, "Neighbour graph degree")->check(CLI::Range(2, 1 << 20))->capture_default_str();
  correct = c->add_subcommand("correct", "Flip predicted normals to agree with a reference field");
  correct->add_option("--pred", a.pred, "Unoriented predictions (.normals)")->required();
  correct->add_option("--ref", a.ref, "Oriented reference field (.normals), e.g. from orient mst")->required();
  correct->add_option("--out", a.out, "Oriented predictions (.normals)")->required();
}

int run_orient_mst(const OrientArgs& a) {
  const PointCloud cloud = io::load_xyz_with_normals(a.xyz, a.normals);
  const OrientedField f = mst_orient(cloud, a.k);
  if (f.components > 1) {
    std::cerr << "warning: neighbour graph has " << f.components
              << " components; each was oriented independently\n";
  }
  io::save_normals(a.out, f.normals);
  std::cout << "wrote " << f.normals.size() << " normals to " << a.out << '\n';
  return 0;
}

int run_orient_correct(const OrientArgs& a) {
  const auto pred = io::load_normals(a.pred);
  OrientedField ref;
  ref.source = OrientedField::Source::external_file;
  ref.normals = normalized(io::load_normals(a.ref));
  const auto out = sign_correct(pred, ref);
  io::save_normals(a.out, out);
  std::cout << "wrote " << out.size() << " normals to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::vector<std::string> pred, gt, shape, category;
  AngleMode mode = AngleMode::unoriented;
  std::string report, errors, pgp;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("eval", "Angular error metrics of predicted against ground-truth normals");
  c->add_option("--pred", a.pred, "Predicted normals (.normals); repeat for several shapes")->required();
  c->add_option("--gt", a.gt, "Ground-truth normals, one per --pred")->required();
  c->add_option("--mode", a.mode, "unoriented or oriented")
      ->transform(choice(std::map<std::string, AngleMode>{{"unoriented", AngleMode::unoriented},
                                                          {"oriented", AngleMode::oriented}}))
      ->default_str("unoriented");
  c->add_option("--shape", a.shape, "Shape name per --pred (default: the --pred path)");
  c->add_option("--category", a.category, "Category per --pred (default: all)");
  c->add_option("--report", a.report, "Report CSV: shape,category,mode,rmse,auc");
  c->add_option("--errors", a.errors, "Per-point errors in degrees (single shape only)");
  c->add_option("--pgp", a.pgp, "PGP curve CSV: threshold,<shape>... (thresholds 0..90)");
}

int run_eval(const EvalArgs& a) {
  if (a.pred.size() != a.gt.size()) throw Error(ErrorKind::parameter, "--pred and --gt counts differ");
  if (!a.shape.empty() && a.shape.size() != a.pred.size()) {
    throw Error(ErrorKind::parameter, "--shape must be given once per --pred");
  }
  if (!a.category.empty() && a.category.size() != a.pred.size()) {
    throw Error(ErrorKind::parameter, "--category must be given once per --pred");
  }
  if (!a.errors.empty() && a.pred.size() != 1) {
    throw Error(ErrorKind::parameter, "--errors needs exactly one --pred");
  }
  std::vector<EvalReport> reports;
  for (std::size_t i = 0; i < a.pred.size(); ++i) {
    reports.push_back(evaluate(io::load_normals(a.pred[i]), io::load_normals(a.gt[i]), a.mode,
                               a.shape.empty() ? a.pred[i] : a.shape[i],
                               a.category.empty() ? "all" : a.category[i]));
  }
  write_report_csv(std::cout, reports);
  const auto means = category_means(reports);
  if (reports.size() > 1) {
    for (const auto& [cat, m] : means) std::cout << "category " << cat << " mean rmse " << io::format_real(m) << '\n';
  }
  if (!a.report.empty()) {
    std::ofstream os(a.report, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::io, "cannot write '" + a.report + "'");
    write_report_csv(os, reports);
  }
  if (!a.errors.empty()) write_errors(a.errors, reports.front().per_point_errors);
  if (!a.pgp.empty()) {
    std::ofstream os(a.pgp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::io, "cannot write '" + a.pgp + "'");
    os << "threshold";
    for (const auto& r : reports) os << ',' << r.shape;
    os << '\n';
    for (std::size_t t = 0; t < kPgpSteps; ++t) {
      os << t;
      for (const auto& r : reports) os << ',' << io::format_real(r.pgp_curve[t]);
      os << '\n';
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  bool micro = false;
  std::uint64_t seed = 1;
  double eps = 1e-4;
  double tolerance = 1e-4;
};

void add_gradcheck(CLI::App& app, GradcheckArgs& a) {
  auto* c = app.add_subcommand("gradcheck", "Compare model+loss gradients with central differences");
  c->add_flag("--micro", a.micro, "Micro model (r = r' = 8), full five-term loss")->required();
  c->add_option("--seed", a.seed, "Initialization and sample seed")->capture_default_str();
  c->add_option("--eps", a.eps, "Finite-difference step")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--tolerance", a.tolerance, "Pass threshold on the max relative error")->capture_default_str();
}

int run_gradcheck(const GradcheckArgs& a) {
  const MicroGradCheck res = micro_grad_check(a.seed, a.eps);
  const auto& r = res.report;
  std::cout << "parameters " << res.parameter_count << ", checked " << r.checked << ", kink-straddling skipped "
            << r.skipped_kinks << '\n';
  std::cout << "worst " << res.worst_parameter << "[" << r.worst_coord << "] analytic "
            << io::format_real(r.worst_analytic) << " numeric " << io::format_real(r.worst_numeric) << '\n';
  std::printf("max relative error %.3e\n", r.max_rel_error);
  const bool ok = r.max_rel_error <= a.tolerance;
  std::cout << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confidence-weighted point-cloud normal estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cwn 0.1.0");

  SynthArgs synth;
  ConfidenceArgs conf;
  TrainArgs trainer;
  InferArgs infer;
  BaselineArgs base;
  OrientArgs orient;
  EvalArgs eval;
  GradcheckArgs gc;
  CLI::App *pca = nullptr, *jet = nullptr, *mst = nullptr, *correct = nullptr;
  add_synth(app, synth);
  add_confidence(app, conf);
  add_train(app, trainer);
  add_infer(app, infer);
  add_baseline(app, base, pca, jet);
  add_orient(app, orient, mst, correct);
  add_eval(app, eval);
  add_gradcheck(app, gc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand("synth")) return run_synth(synth);
    if (app.got_subcommand("confidence")) return run_confidence(conf);
    if (app.got_subcommand("train")) return run_train(trainer);
    if (app.got_subcommand("infer")) return run_infer(infer);
    if (pca->parsed()) return run_baseline(base, BaselineMethod::pca);
    if (jet->parsed()) return run_baseline(base, BaselineMethod::jet);
    if (mst->parsed()) return run_orient_mst(orient);
    if (correct->parsed()) return run_orient_correct(orient);
    if (app.got_subcommand("eval")) return run_eval(eval);
    if (app.got_subcommand("gradcheck")) return run_gradcheck(gc);
  } catch (const cwn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_user_error() ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
