#pragma once

// Confidence-weighted training: sample construction from noisy/clean shape
// pairs, Adam, and the epoch loop with CSV logging and checkpoints.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cwn/confidence.hpp"
#include "cwn/datagen.hpp"
#include "cwn/error.hpp"
#include "cwn/io.hpp"
#include "cwn/kd_index.hpp"
#include "cwn/loss.hpp"
#include "cwn/model.hpp"
#include "cwn/sampling.hpp"

namespace cwn {

/// Per-sample loss weighting. `corrected_gt` keeps c = 1 but replaces every
/// label with the normal of the nearest clean point.
enum class ConfidenceMode { off, surface, normal, corrected_gt };

inline const char* to_string(ConfidenceMode m) {
  switch (m) {
    case ConfidenceMode::off: return "off";
    case ConfidenceMode::surface: return "surface";
    case ConfidenceMode::normal: return "normal";
    case ConfidenceMode::corrected_gt: return "corrected_gt";
  }
  return "?";
}

inline ConfidenceMode parse_confidence_mode(const std::string& s) {
  if (s == "off") return ConfidenceMode::off;
  if (s == "surface") return ConfidenceMode::surface;
  if (s == "normal") return ConfidenceMode::normal;
  if (s == "corrected_gt") return ConfidenceMode::corrected_gt;
  throw Error(ErrorKind::parameter, "unknown confidence mode '" + s + "' (off, surface, normal, corrected_gt)");
}

struct TrainConfig {
  double lr = 0.0009;
  std::size_t batch = 16;
  std::size_t epochs = 50;
  ConfidenceMode mode = ConfidenceMode::off;
  double sigma_s = kDefaultSigmaSurface;
  double sigma_n = kDefaultSigmaNormal;
  std::size_t samples_per_shape = 64;
  std::uint64_t seed = 1;
  ModelConfig model;
  LossOptions loss;
  std::string checkpoint_path;  // written after every epoch when non-empty
  std::string log_path;         // CSV, written when non-empty

  void validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(ErrorKind::parameter, "lr must be >= 0");
    if (batch < 1) throw Error(ErrorKind::parameter, "batch must be >= 1");
    if (!(sigma_s > 0.0) || !(sigma_n > 0.0)) throw Error(ErrorKind::parameter, "sigmas must be positive");
    if (samples_per_shape < 1) throw Error(ErrorKind::parameter, "samples_per_shape must be >= 1");
    model.validate();
  }
};

namespace detail {
inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw Error(ErrorKind::parameter, key + ": expected a boolean, got '" + v + "'");
}
template <typename T>
T parse_value(const std::string& key, const std::string& v) {
  T out{};
  const char* first = v.data();
  const char* last = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw Error(ErrorKind::parameter, key + ": bad value '" + v + "'");
  return out;
}
}  // namespace detail

/// Applies one `key=value` setting. Unknown keys are rejected.
inline void apply_setting(TrainConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_value;
  if (key == "lr") c.lr = parse_value<double>(key, value);
  else if (key == "batch") c.batch = parse_value<std::size_t>(key, value);
  else if (key == "epochs") c.epochs = parse_value<std::size_t>(key, value);
  else if (key == "confidence_mode") c.mode = parse_confidence_mode(value);
  else if (key == "sigma_s") c.sigma_s = parse_value<double>(key, value);
  else if (key == "sigma_n") c.sigma_n = parse_value<double>(key, value);
  else if (key == "samples_per_shape") c.samples_per_shape = parse_value<std::size_t>(key, value);
  else if (key == "seed") c.seed = parse_value<std::uint64_t>(key, value);
  else if (key == "model_seed") c.model.seed = parse_value<std::uint64_t>(key, value);
  else if (key == "r") c.model.r = parse_value<std::size_t>(key, value);
  else if (key == "r_prime") c.model.r_prime = parse_value<std::size_t>(key, value);
  else if (key == "k_group") c.model.k_group = parse_value<std::size_t>(key, value);
  else if (key == "m_weight") c.model.m_weight = parse_value<std::size_t>(key, value);
  else if (key == "qstn") c.model.use_qstn = detail::parse_bool(key, value);
  else if (key == "neighbor_form") {
    if (value == "flip_invariant") c.loss.neighbor_form = NeighborForm::flip_invariant;
    else if (value == "literal") c.loss.neighbor_form = NeighborForm::literal;
    else throw Error(ErrorKind::parameter, "neighbor_form: expected flip_invariant or literal");
  } else if (key == "delta_mode") {
    if (value == "as_printed") c.loss.delta_mode = DeltaMode::as_printed;
    else if (value == "squared_inside") c.loss.delta_mode = DeltaMode::squared_inside;
    else throw Error(ErrorKind::parameter, "delta_mode: expected as_printed or squared_inside");
  } else if (key == "lambda1") c.loss.lambdas.l1 = parse_value<double>(key, value);
  else if (key == "lambda2") c.loss.lambdas.l2 = parse_value<double>(key, value);
  else if (key == "lambda3") c.loss.lambdas.l3 = parse_value<double>(key, value);
  else if (key == "lambda4") c.loss.lambdas.l4 = parse_value<double>(key, value);
  else if (key == "lambda5") c.loss.lambdas.l5 = parse_value<double>(key, value);
  else if (key == "checkpoint") c.checkpoint_path = value;
  else if (key == "log") c.log_path = value;
  else throw Error(ErrorKind::parameter, "unknown config key '" + key + "'");
}

/// Flat `key=value` file; blank lines and '#' comments are ignored.
inline TrainConfig load_train_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

/// A noisy training cloud (normals = annotated labels) and, optionally, its
/// noise-free counterpart with normals.
struct TrainShape {
  std::string name;
  PointCloud noisy;
  std::optional<PointCloud> clean;
};

inline std::vector<TrainShape> load_shapes(const std::string& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  const std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& f) { return (dir / f).string(); };
  std::vector<TrainShape> out;
  for (const auto& e : entries) {
    TrainShape s;
    s.name = e.name;
    s.noisy = io::load_xyz_with_normals(resolve(e.xyz), resolve(e.normals));
    if (!e.clean_xyz.empty()) s.clean = io::load_xyz_with_normals(resolve(e.clean_xyz), resolve(e.clean_normals));
    out.push_back(std::move(s));
  }
  return out;
}

struct TrainSample {
  ModelInput input;
  SampleTarget target;
  std::size_t shape = 0;
  std::size_t query = 0;
};

/// Network input plus PCA-frame targets for query i. `label(j)` gives the
/// world-frame training normal of point j.
inline TrainSample make_sample(const PointCloud& cloud, const KdIndex& index, std::size_t i,
                               const std::function<Vec3(std::size_t)>& label, double confidence,
                               const ModelConfig& config, Rng& rng) {
  const Patch patch = sample_local_patch(cloud, index, i, config.r);
  const GlobalSet global = sample_global(cloud, i, config.r_prime, rng);
  TrainSample s;
  s.query = i;
  s.input = make_input(patch, global, config);
  const Mat3& a = patch.align_rot;
  s.target.n_gt = (a * label(i)).normalized();
  s.target.confidence = confidence;
  for (auto k : s.input.m_subset) {
    s.target.neighbor_gt.push_back((a * label(patch.neighbor_indices[k])).normalized());
    s.target.patch_points_m.push_back(patch.local_points[k]);
  }
  return s;
}

/// Training samples for every shape: `samples_per_shape` queries drawn
/// without replacement, weighted according to `config.mode`.
inline std::vector<TrainSample> build_samples(const std::vector<TrainShape>& shapes, const TrainConfig& config) {
  config.validate();
  std::vector<TrainSample> out;
  for (std::size_t si = 0; si < shapes.size(); ++si) {
    const TrainShape& shape = shapes[si];
    const PointCloud& cloud = shape.noisy;
    if (!cloud.has_normals()) throw Error(ErrorKind::missing_data, shape.name + ": no annotated normals");
    if (config.mode != ConfidenceMode::off && !shape.clean) {
      throw Error(ErrorKind::missing_data, shape.name + ": confidence mode '" + std::string(to_string(config.mode)) +
                                               "' needs the clean counterpart");
    }
    const KdIndex index(cloud);

    std::vector<double> conf(cloud.size(), 1.0);
    std::vector<Vec3> labels = cloud.normals();
    if (config.mode == ConfidenceMode::surface || config.mode == ConfidenceMode::normal) {
      const auto rec = annotate_dataset(cloud, *shape.clean, config.sigma_s, config.sigma_n);
      for (std::size_t j = 0; j < rec.size(); ++j) {
        conf[j] = config.mode == ConfidenceMode::surface ? rec[j].c_surface : rec[j].c_normal;
      }
    } else if (config.mode == ConfidenceMode::corrected_gt) {
      const KdIndex clean_index(*shape.clean);
      for (std::size_t j = 0; j < cloud.size(); ++j) {
        labels[j] = nearest_surface_normal(cloud.point(j), *shape.clean, clean_index);
      }
    }

    const std::size_t count = std::min(config.samples_per_shape, cloud.size());
    std::vector<std::size_t> all(cloud.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> queries;
    Rng pick = query_rng(config.seed, si);
    std::sample(all.begin(), all.end(), std::back_inserter(queries), static_cast<std::ptrdiff_t>(count), pick);

    auto label = [&](std::size_t j) { return labels[j]; };
    for (auto i : queries) {
      Rng rng = query_rng(config.seed ^ 0x5deece66dULL, (static_cast<std::uint64_t>(si) << 32) | i);
      TrainSample s = make_sample(cloud, index, i, label, conf[i], config.model, rng);
      s.shape = si;
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update from the gradients stored on `params`.
/// Throws (leaving params untouched) when any gradient is non-finite.
inline void adam_step(ModelParams& params, AdamState& state, double lr) {
  auto& entries = params.entries();
  if (state.m.empty()) {
    for (const auto& e : entries) {
      state.m.emplace_back(e.tensor.size(), 0.0);
      state.v.emplace_back(e.tensor.size(), 0.0);
    }
  }
  if (state.m.size() != entries.size()) throw Error(ErrorKind::shape, "optimizer state does not match parameters");
  std::vector<std::vector<double>> grads;
  grads.reserve(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    grads.push_back(entries[k].tensor.grad());
    if (state.m[k].size() != grads.back().size()) throw Error(ErrorKind::shape, "optimizer state shape mismatch");
    for (double g : grads.back()) {
      if (!std::isfinite(g)) throw Error(ErrorKind::divergence, "non-finite gradient in " + entries[k].name);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& w = entries[k].tensor.mutable_values();
    auto& m = state.m[k];
    auto& v = state.v[k];
    const auto& g = grads[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

struct LossRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double l1 = 0, l2 = 0, l3 = 0, l4 = 0, l5 = 0, total = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_curve;  // batch-mean total per step
  std::vector<LossRow> log;
};

/// Batch-mean loss breakdown (values only) and accumulated gradients for one
/// batch. Gradients are those of the batch mean of the per-sample totals.
inline LossRow accumulate_batch(const std::vector<TrainSample>& samples, const std::vector<std::size_t>& batch,
                                const ModelParams& params, const TrainConfig& config) {
  LossRow row;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto idx : batch) {
    const TrainSample& s = samples[idx];
    const ModelOutput out = forward(s.input, params, config.model);
    const LossBreakdown b = compute_losses(out, s.target, config.loss);
    row.l1 += inv * b.l1.item();
    row.l2 += inv * b.l2.item();
    row.l3 += inv * b.l3.item();
    row.l4 += inv * b.l4.item();
    row.l5 += inv * b.l5.item();
    row.total += inv * b.total.item();
    ad::backward(ad::scalar_mul(b.total, inv));
  }
  return row;
}

inline void write_log_header(std::ostream& os) { os << "step,epoch,l1,l2,l3,l4,l5,total\n"; }
inline void write_log_row(std::ostream& os, const LossRow& r) {
  os << r.step << ',' << r.epoch << ',' << io::format_real(r.l1) << ',' << io::format_real(r.l2) << ','
     << io::format_real(r.l3) << ',' << io::format_real(r.l4) << ',' << io::format_real(r.l5) << ','
     << io::format_real(r.total) << '\n';
}

/// Minimizes the batch-mean total loss with Adam. Samples are reshuffled
/// every epoch from a stream seeded by `config.seed`. A non-finite loss
/// aborts with a divergence error; the last completed epoch's checkpoint
/// stays on disk.
inline TrainResult train(const TrainConfig& config, const std::vector<TrainSample>& samples,
                         std::optional<ModelParams> initial = std::nullopt) {
  config.validate();
  if (samples.empty()) throw Error(ErrorKind::empty_input, "no training samples");
  TrainResult result;
  result.params = initial ? std::move(*initial) : init_params(config.model);
  AdamState adam;
  Rng shuffle_rng(config.seed);

  std::ofstream log;
  if (!config.log_path.empty()) {
    log.open(config.log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw Error(ErrorKind::io, "cannot write '" + config.log_path + "'");
    write_log_header(log);
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t end = std::min(order.size(), begin + config.batch);
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      result.params.zero_grad();
      LossRow row = accumulate_batch(samples, batch, result.params, config);
      row.step = step++;
      row.epoch = epoch;
      if (!std::isfinite(row.total)) {
        if (log) log.flush();
        throw Error(ErrorKind::divergence, "non-finite loss at step " + std::to_string(row.step));
      }
      adam_step(result.params, adam, config.lr);
      result.loss_curve.push_back(row.total);
      result.log.push_back(row);
      if (log) write_log_row(log, row);
    }
    if (log) log.flush();
    if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, result.params, config.model);
  }
  return result;
}

}  // namespace cwn
