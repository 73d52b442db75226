#pragma once

// Two-branch patch regression network.
//
//   local patch (r x 3) ──► QSTN ──► R (3x3, shared)
//   local  · R ─► per-point MLP ─► k-NN group max ─► MLP ─► × distance weight ─┐
//   global · R ─► per-point MLP ─► max-pool ─► repeat r times ─────────────────┴► concat
//   ─► fusion MLP ─► { attention-weighted normal votes → n_pred,
//                      neighbour normals and point weights for the M nearest points }
//
// All vectors are rows. A patch point p (PCA frame) enters the network frame
// as p·R, so a world vector v maps to Rᵀ·A·v and back via Aᵀ·R.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cwn/autodiff/ops.hpp"
#include "cwn/autodiff/tensor.hpp"
#include "cwn/error.hpp"
#include "cwn/io.hpp"
#include "cwn/kd_index.hpp"
#include "cwn/point_cloud.hpp"
#include "cwn/sampling.hpp"

namespace cwn {

using ad::Tensor;

struct LayerWidths {
  std::size_t qstn1 = 32;
  std::size_t qstn2 = 64;
  std::size_t qstn3 = 32;
  std::size_t enc1 = 64;
  std::size_t enc2 = 128;
  std::size_t fuse1 = 128;
  std::size_t fuse2 = 64;
};

struct ModelConfig {
  std::size_t r = 64;         // local patch size
  std::size_t r_prime = 128;  // global set size
  std::size_t k_group = 16;   // neighbours per local feature group
  std::size_t m_weight = 32;  // points receiving weight / neighbour-normal predictions
  bool use_qstn = true;       // false pins R to the identity
  std::uint64_t seed = 1;
  LayerWidths widths;

  void validate() const {
    if (r < 1 || r_prime < 1) throw Error(ErrorKind::parameter, "patch sizes must be positive");
    if (use_qstn && r < 4) throw Error(ErrorKind::parameter, "QSTN needs r >= 4");
    if (k_group < 1 || k_group > r) throw Error(ErrorKind::parameter, "k_group must be in [1, r]");
    if (m_weight < 1 || m_weight > r) throw Error(ErrorKind::parameter, "m_weight must be in [1, r]");
  }

  /// Tiny configuration for finite-difference checks.
  static ModelConfig micro(std::uint64_t seed = 1) {
    ModelConfig c;
    c.r = 8;
    c.r_prime = 8;
    c.k_group = 4;
    c.m_weight = 4;
    c.seed = seed;
    return c;
  }
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered parameter set. Names are unique; order is the checkpoint order.
class ModelParams {
 public:
  void add(std::string name, Tensor t) {
    if (index_.count(name)) throw Error(ErrorKind::internal, "duplicate parameter " + name);
    index_[name] = entries_.size();
    entries_.push_back({std::move(name), std::move(t)});
  }
  const Tensor& operator[](const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorKind::missing_data, "no parameter named " + name);
    return entries_[it->second].tensor;
  }
  std::vector<NamedTensor>& entries() noexcept { return entries_; }
  const std::vector<NamedTensor>& entries() const noexcept { return entries_; }
  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& e : entries_) out.push_back(e.tensor);
    return out;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }
  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }
  /// Deep copy (fresh leaves, same values).
  ModelParams clone() const {
    ModelParams p;
    for (const auto& e : entries_) {
      p.add(e.name, Tensor::from(e.tensor.rows(), e.tensor.cols(), e.tensor.values(), true));
    }
    return p;
  }
  bool all_finite() const {
    for (const auto& e : entries_)
      for (double v : e.tensor.values())
        if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::vector<NamedTensor> entries_;
  std::map<std::string, std::size_t> index_;
};

namespace detail {

inline void add_linear(ModelParams& p, std::mt19937_64& rng, const std::string& name, std::size_t in,
                       std::size_t out, double gain = 1.0) {
  const double a = gain * std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> u(-a, a);
  std::vector<double> w(in * out);
  for (auto& v : w) v = u(rng);
  p.add(name + ".w", Tensor::from(in, out, std::move(w), true));
  p.add(name + ".b", Tensor::zeros(1, out, true));
}

inline void set_values(const Tensor& t, std::vector<double> v) { t.node().value = std::move(v); }

}  // namespace detail

/// Deterministic initialization from `config.seed`. The QSTN output layer
/// starts at zero with an identity-quaternion bias, and the normal heads
/// start biased towards +z, so an untrained model reproduces the PCA frame.
inline ModelParams init_params(const ModelConfig& config) {
  config.validate();
  const auto& w = config.widths;
  std::mt19937_64 rng(config.seed);
  ModelParams p;
  detail::add_linear(p, rng, "qstn.1", 3, w.qstn1);
  detail::add_linear(p, rng, "qstn.2", w.qstn1, w.qstn2);
  detail::add_linear(p, rng, "qstn.3", w.qstn2, w.qstn3);
  detail::add_linear(p, rng, "qstn.4", w.qstn3, 4);
  detail::set_values(p["qstn.4.w"], std::vector<double>(w.qstn3 * 4, 0.0));
  detail::set_values(p["qstn.4.b"], {1.0, 0.0, 0.0, 0.0});
  detail::add_linear(p, rng, "local.1", 3, w.enc1);
  detail::add_linear(p, rng, "local.2", w.enc1, w.enc2);
  detail::add_linear(p, rng, "global.1", 3, w.enc1);
  detail::add_linear(p, rng, "global.2", w.enc1, w.enc2);
  detail::add_linear(p, rng, "fuse.1", 2 * w.enc2, w.fuse1);
  detail::add_linear(p, rng, "fuse.2", w.fuse1, w.fuse2);
  detail::add_linear(p, rng, "head.vote", w.fuse2, 3, 0.1);
  detail::add_linear(p, rng, "head.attention", w.fuse2, 1, 0.1);
  detail::add_linear(p, rng, "head.neighbor", w.fuse2, 3, 0.1);
  detail::add_linear(p, rng, "head.weight", w.fuse2, 1, 0.1);
  detail::set_values(p["head.vote.b"], {0.0, 0.0, 1.0});
  detail::set_values(p["head.neighbor.b"], {0.0, 0.0, 1.0});
  return p;
}

/// Network-ready tensors for one query.
struct ModelInput {
  Tensor local;                     // r x 3, PCA frame, unit radius
  Tensor global;                    // r' x 3, PCA frame, scaled by the cloud scale
  Tensor distance_weight;           // r x 1
  std::vector<std::size_t> groups;  // r * k_group row indices into local
  std::vector<std::size_t> m_subset;  // the M patch rows nearest the query
};

inline constexpr double kDistanceSigma = 1.0 / 3.0;

namespace detail {

inline Tensor rows_tensor(const std::vector<Vec3>& pts) {
  std::vector<double> v;
  v.reserve(3 * pts.size());
  for (const auto& p : pts) v.insert(v.end(), {p.x(), p.y(), p.z()});
  return ad::constant(pts.size(), 3, std::move(v));
}

// Indices 0..n-1 ordered by (distance to `q`, index).
inline std::vector<std::size_t> order_by_distance(const std::vector<Vec3>& pts, const Vec3& q) {
  std::vector<std::pair<double, std::size_t>> d(pts.size());
  for (std::size_t j = 0; j < pts.size(); ++j) d[j] = {(pts[j] - q).squaredNorm(), j};
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out(pts.size());
  for (std::size_t j = 0; j < pts.size(); ++j) out[j] = d[j].second;
  return out;
}

}  // namespace detail

inline ModelInput make_input(const Patch& patch, const GlobalSet& global, const ModelConfig& config) {
  if (patch.local_points.size() != config.r) {
    throw Error(ErrorKind::shape, "patch has " + std::to_string(patch.local_points.size()) +
                                      " points, config expects " + std::to_string(config.r));
  }
  if (global.points.size() != config.r_prime) {
    throw Error(ErrorKind::shape, "global set has " + std::to_string(global.points.size()) +
                                      " points, config expects " + std::to_string(config.r_prime));
  }
  ModelInput in;
  const auto& lp = patch.local_points;
  in.local = detail::rows_tensor(lp);
  std::vector<Vec3> g;
  g.reserve(global.points.size());
  for (const auto& p : global.points) g.push_back(patch.align_rot * p);
  in.global = detail::rows_tensor(g);

  std::vector<double> dw(lp.size());
  for (std::size_t j = 0; j < lp.size(); ++j) {
    dw[j] = std::exp(-lp[j].squaredNorm() / (kDistanceSigma * kDistanceSigma));
  }
  in.distance_weight = ad::constant(lp.size(), 1, std::move(dw));

  in.groups.reserve(lp.size() * config.k_group);
  for (const auto& p : lp) {
    auto ord = detail::order_by_distance(lp, p);
    in.groups.insert(in.groups.end(), ord.begin(), ord.begin() + static_cast<std::ptrdiff_t>(config.k_group));
  }
  auto ord = detail::order_by_distance(lp, Vec3::Zero());
  in.m_subset.assign(ord.begin(), ord.begin() + static_cast<std::ptrdiff_t>(config.m_weight));
  return in;
}

struct ModelOutput {
  Tensor n_pred;            // 1 x 3, network frame, unit
  Tensor neighbor_normals;  // M x 3, network frame, unit
  Tensor weights;           // M x 1, in (0, 1)
  Tensor rotation;          // 3 x 3
  Tensor attention;         // 1 x r, sums to 1
};

namespace detail {
inline Tensor linear(const Tensor& x, const ModelParams& p, const std::string& name) {
  return ad::add(ad::matmul(x, p[name + ".w"]), p[name + ".b"]);
}
inline Tensor act(const Tensor& x) { return ad::leaky_relu(x); }
}  // namespace detail

/// Quaternion spatial transformer: per-point MLP, max-pool, MLP to a
/// quaternion, then its rotation matrix.
inline Tensor qstn(const Tensor& points, const ModelParams& p) {
  if (points.cols() != 3) throw Error(ErrorKind::shape, "qstn expects n x 3 points, got " + points.shape_str());
  if (points.rows() < 4) throw Error(ErrorKind::shape, "qstn needs at least 4 points");
  using detail::act;
  using detail::linear;
  Tensor h = act(linear(points, p, "qstn.1"));
  h = act(linear(h, p, "qstn.2"));
  Tensor code = ad::max_pool_rows(h);
  Tensor q = act(linear(code, p, "qstn.3"));
  q = linear(q, p, "qstn.4");
  return ad::quat_to_rot(q);
}

inline ModelOutput forward(const ModelInput& in, const ModelParams& p, const ModelConfig& config) {
  if (in.local.rows() != config.r || in.global.rows() != config.r_prime ||
      in.groups.size() != config.r * config.k_group || in.m_subset.size() != config.m_weight) {
    throw Error(ErrorKind::shape, "model input does not match the configuration");
  }
  using detail::act;
  using detail::linear;
  ModelOutput out;
  out.rotation = config.use_qstn ? qstn(in.local, p) : Tensor::identity(3);
  const Tensor local = ad::matmul(in.local, out.rotation);
  const Tensor global = ad::matmul(in.global, out.rotation);

  Tensor h = act(linear(local, p, "local.1"));
  h = ad::group_max_rows(h, in.groups, config.k_group);
  h = act(linear(h, p, "local.2"));
  h = ad::mul(h, in.distance_weight);

  Tensor g = act(linear(global, p, "global.1"));
  g = act(linear(g, p, "global.2"));
  g = ad::repeat_rows(ad::max_pool_rows(g), config.r);

  Tensor f = ad::concat_cols(h, g);
  f = act(linear(f, p, "fuse.1"));
  f = act(linear(f, p, "fuse.2"));

  const Tensor votes = linear(f, p, "head.vote");
  out.attention = ad::softmax_rows(ad::transpose(linear(f, p, "head.attention")));
  out.n_pred = ad::normalize_rows(ad::matmul(out.attention, votes));

  const Tensor fm = ad::gather_rows(f, in.m_subset);
  out.neighbor_normals = ad::normalize_rows(linear(fm, p, "head.neighbor"));
  out.weights = ad::sigmoid(linear(fm, p, "head.weight"));
  return out;
}

/// Maps a network-frame row vector back to world coordinates: Aᵀ·R·n.
inline Vec3 network_to_world(const Vec3& n_net, const Mat3& rot_qstn, const Mat3& align_rot) {
  return (align_rot.transpose() * (rot_qstn * n_net)).normalized();
}

inline Mat3 to_mat3(const Tensor& t) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = t(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  return m;
}

/// Unoriented world-frame normal for point i.
inline Vec3 infer_normal(const PointCloud& cloud, const KdIndex& index, std::size_t i, const ModelParams& p,
                         const ModelConfig& config, Rng& rng) {
  const Patch patch = sample_local_patch(cloud, index, i, config.r);
  const GlobalSet global = sample_global(cloud, i, config.r_prime, rng);
  const ModelInput in = make_input(patch, global, config);
  ad::NoGradGuard guard;
  const ModelOutput out = forward(in, p, config);
  const Vec3 n(out.n_pred(0, 0), out.n_pred(0, 1), out.n_pred(0, 2));
  return network_to_world(n, to_mat3(out.rotation), patch.align_rot);
}

/// Normals for `queries`, each drawn with its own stream query_rng(seed, i),
/// so results do not depend on `jobs`.
inline std::vector<Vec3> infer_normals(const PointCloud& cloud, const std::vector<std::size_t>& queries,
                                       const ModelParams& p, const ModelConfig& config, std::uint64_t seed,
                                       unsigned jobs = 1) {
  const KdIndex index(cloud);
  std::vector<Vec3> out(queries.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t k = begin; k < queries.size(); k += stride) {
      Rng rng = query_rng(seed, queries[k]);
      out[k] = infer_normal(cloud, index, queries[k], p, config, rng);
    }
  };
  jobs = std::max(1u, jobs);
  if (jobs == 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(jobs);
    {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < jobs; ++t) {
        pool.emplace_back([&, t] {
          try {
            work(t, jobs);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   cwn-checkpoint 1
//   config r=.. r_prime=.. k_group=.. m_weight=.. qstn=.. seed=.. widths=a,b,c,d,e,f,g
//   manifest <n>
//   <name> <rows> <cols>          (n lines)
//   tensor <name> <rows> <cols>
//   <rows lines of cols values>   (per tensor, manifest order)
//   end
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline std::string config_line(const ModelConfig& c) {
  const auto& w = c.widths;
  std::ostringstream os;
  os << "config r=" << c.r << " r_prime=" << c.r_prime << " k_group=" << c.k_group << " m_weight=" << c.m_weight
     << " qstn=" << (c.use_qstn ? 1 : 0) << " seed=" << c.seed << " widths=" << w.qstn1 << ',' << w.qstn2 << ','
     << w.qstn3 << ',' << w.enc1 << ',' << w.enc2 << ',' << w.fuse1 << ',' << w.fuse2;
  return os.str();
}

inline void save_checkpoint(const std::string& path, const ModelParams& p, const ModelConfig& config) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write '" + tmp + "'");
    out << "cwn-checkpoint " << kCheckpointVersion << '\n' << config_line(config) << '\n';
    out << "manifest " << p.entries().size() << '\n';
    for (const auto& e : p.entries()) out << e.name << ' ' << e.tensor.rows() << ' ' << e.tensor.cols() << '\n';
    for (const auto& e : p.entries()) {
      const Tensor& t = e.tensor;
      out << "tensor " << e.name << ' ' << t.rows() << ' ' << t.cols() << '\n';
      for (std::size_t i = 0; i < t.rows(); ++i) {
        for (std::size_t j = 0; j < t.cols(); ++j) out << (j ? " " : "") << io::format_real(t(i, j));
        out << '\n';
      }
    }
    out << "end\n";
    if (!out) throw Error(ErrorKind::io, "write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(ErrorKind::io, "cannot move checkpoint to '" + path + "'");
}

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  auto fail = [&](const std::string& why) { throw Error(ErrorKind::parse, path + ": " + why); };
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "cwn-checkpoint") fail("not a checkpoint");
  if (version != kCheckpointVersion) fail("unsupported version " + std::to_string(version));

  std::string line;
  std::getline(in, line);
  if (!std::getline(in, line) || line.rfind("config ", 0) != 0) fail("missing config line");
  Checkpoint ck;
  {
    std::istringstream ls(line.substr(7));
    std::string kv;
    while (ls >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) fail("bad config token '" + kv + "'");
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      try {
        if (key == "r") ck.config.r = std::stoull(val);
        else if (key == "r_prime") ck.config.r_prime = std::stoull(val);
        else if (key == "k_group") ck.config.k_group = std::stoull(val);
        else if (key == "m_weight") ck.config.m_weight = std::stoull(val);
        else if (key == "qstn") ck.config.use_qstn = val == "1";
        else if (key == "seed") ck.config.seed = std::stoull(val);
        else if (key == "widths") {
          std::vector<std::size_t> w;
          std::istringstream ws(val);
          std::string part;
          while (std::getline(ws, part, ',')) w.push_back(std::stoull(part));
          if (w.size() != 7) fail("widths needs 7 entries");
          ck.config.widths = {w[0], w[1], w[2], w[3], w[4], w[5], w[6]};
        } else fail("unknown config key '" + key + "'");
      } catch (const std::logic_error&) {
        fail("bad value for '" + key + "'");
      }
    }
  }
  ck.params = init_params(ck.config);

  std::string word;
  std::size_t count = 0;
  if (!(in >> word >> count) || word != "manifest") fail("missing manifest");
  if (count != ck.params.entries().size()) fail("manifest lists " + std::to_string(count) + " tensors");
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    std::size_t r = 0, c = 0;
    if (!(in >> name >> r >> c)) fail("truncated manifest");
    const auto& e = ck.params.entries()[k];
    if (name != e.name || r != e.tensor.rows() || c != e.tensor.cols()) fail("manifest mismatch at " + name);
  }
  for (auto& e : ck.params.entries()) {
    std::string name;
    std::size_t r = 0, c = 0;
    if (!(in >> word >> name >> r >> c) || word != "tensor" || name != e.name) fail("expected tensor " + e.name);
    auto& vals = e.tensor.mutable_values();
    for (auto& v : vals) {
      std::string tok;
      if (!(in >> tok)) fail("truncated tensor " + e.name);
      v = io::detail::parse_number<double>(tok, path, 0);
    }
  }
  if (!(in >> word) || word != "end") fail("missing end marker");
  return ck;
}

}  // namespace cwn
