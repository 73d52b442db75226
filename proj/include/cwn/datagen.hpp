#pragma once

// Synthetic shapes with analytic normals, Gaussian noise at a fraction of the
// bounding-box diagonal, and density-varying subsets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cwn/error.hpp"
#include "cwn/io.hpp"
#include "cwn/pca.hpp"
#include "cwn/point_cloud.hpp"

namespace cwn {

enum class ShapeKind { sphere, torus, saddle };

inline const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::torus: return "torus";
    case ShapeKind::saddle: return "saddle";
  }
  return "?";
}

inline ShapeKind parse_shape_kind(const std::string& s) {
  if (s == "sphere") return ShapeKind::sphere;
  if (s == "torus") return ShapeKind::torus;
  if (s == "saddle") return ShapeKind::saddle;
  throw Error(ErrorKind::parameter, "unknown shape '" + s + "' (sphere, torus, saddle)");
}

struct ShapeSpec {
  ShapeKind kind = ShapeKind::sphere;
  std::size_t n_points = 2000;
  double radius = 1.0;        // sphere radius
  double major_radius = 1.0;  // torus centre-line radius
  double minor_radius = 0.35; // torus tube radius
  double extent = 1.0;        // saddle half-width of the square domain
  double kappa1 = 1.0;        // saddle z = 0.5 (kappa1 x² + kappa2 y²)
  double kappa2 = -1.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_points < 100) throw Error(ErrorKind::parameter, "shapes need at least 100 points");
    if (!(radius > 0 && major_radius > 0 && minor_radius > 0 && extent > 0)) {
      throw Error(ErrorKind::parameter, "shape radii and extent must be positive");
    }
    if (kind == ShapeKind::torus && !(minor_radius < major_radius)) {
      throw Error(ErrorKind::parameter, "torus tube radius must be below the centre-line radius");
    }
  }
};

/// Unit normal of the saddle height field at (x, y).
inline Vec3 saddle_normal(double x, double y, double k1, double k2) {
  return Vec3(-k1 * x, -k2 * y, 1.0).normalized();
}

/// Implicit torus function (|p_xy| - R)² + z² - r², zero on the surface.
inline double torus_implicit(const Vec3& p, double major, double minor) {
  const double q = std::hypot(p.x(), p.y()) - major;
  return q * q + p.z() * p.z() - minor * minor;
}

/// Area-uniform samples with analytic outward (sphere, torus) or upward
/// (saddle) normals.
inline PointCloud gen_shape(const ShapeSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3> pts;
  std::vector<Vec3> nrm;
  pts.reserve(spec.n_points);
  nrm.reserve(spec.n_points);
  const double two_pi = 2.0 * std::numbers::pi;

  switch (spec.kind) {
    case ShapeKind::sphere:
      while (pts.size() < spec.n_points) {
        Vec3 d(gauss(rng), gauss(rng), gauss(rng));
        const double len = d.norm();
        if (len < 1e-12) continue;
        d /= len;
        pts.push_back(spec.radius * d);
        nrm.push_back(d);
      }
      break;
    case ShapeKind::torus: {
      const double big = spec.major_radius, small = spec.minor_radius;
      while (pts.size() < spec.n_points) {
        const double u = two_pi * uni(rng);
        const double v = two_pi * uni(rng);
        // Area element is proportional to (R + r cos v).
        if (uni(rng) * (big + small) > big + small * std::cos(v)) continue;
        const Vec3 n(std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v));
        pts.emplace_back((big + small * std::cos(v)) * std::cos(u), (big + small * std::cos(v)) * std::sin(u),
                         small * std::sin(v));
        nrm.push_back(n);
      }
      break;
    }
    case ShapeKind::saddle: {
      const double e = spec.extent;
      const double gmax = std::sqrt(1.0 + std::pow(spec.kappa1 * e, 2) + std::pow(spec.kappa2 * e, 2));
      while (pts.size() < spec.n_points) {
        const double x = e * (2.0 * uni(rng) - 1.0);
        const double y = e * (2.0 * uni(rng) - 1.0);
        const double g = std::sqrt(1.0 + std::pow(spec.kappa1 * x, 2) + std::pow(spec.kappa2 * y, 2));
        if (uni(rng) * gmax > g) continue;
        pts.emplace_back(x, y, 0.5 * (spec.kappa1 * x * x + spec.kappa2 * y * y));
        nrm.push_back(saddle_normal(x, y, spec.kappa1, spec.kappa2));
      }
      break;
    }
  }
  PointCloud cloud(std::move(pts));
  cloud.set_normals(std::move(nrm));
  return cloud;
}

/// Row-aligned noisy copy: iid N(0, (level·scale)²) per coordinate. The
/// clean normals are inherited unchanged as annotations.
inline PointCloud add_noise(const PointCloud& clean, double level, std::uint64_t seed) {
  if (!(level >= 0.0)) throw Error(ErrorKind::parameter, "noise level must be >= 0");
  const double sigma = level * clean.scale();
  std::vector<Vec3> pts = clean.points();
  if (sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    for (auto& p : pts) p += Vec3(gauss(rng), gauss(rng), gauss(rng));
  }
  PointCloud noisy(std::move(pts));
  if (clean.has_normals()) noisy.set_normals(clean.normals());
  return noisy;
}

enum class DensityMode { striped, gradient };

inline DensityMode parse_density_mode(const std::string& s) {
  if (s == "striped") return DensityMode::striped;
  if (s == "gradient") return DensityMode::gradient;
  throw Error(ErrorKind::parameter, "unknown density mode '" + s + "' (striped, gradient)");
}

struct DensityParams {
  double keep_high = 1.0;      // striped: even bands; gradient: start of the ramp
  double keep_low = 0.1;       // striped: odd bands
  double ramp_end = 0.05;      // gradient: keep probability at the far end
  double band_fraction = 0.1;  // striped band width as a fraction of scale
};

/// Coordinate of every point along the first principal axis.
inline std::vector<double> principal_coordinates(const PointCloud& cloud) {
  const PcaFrame f = pca_frame(cloud.points());
  const Vec3 axis = f.rotation.row(0).transpose();
  std::vector<double> t(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) t[i] = axis.dot(cloud.point(i) - f.centroid);
  return t;
}

struct DensityResult {
  PointCloud cloud;
  std::vector<std::size_t> kept;  // source indices
};

/// Random subset with keep probability varying along the first principal
/// axis: alternating bands (striped) or a linear ramp (gradient).
inline DensityResult density_variant(const PointCloud& cloud, DensityMode mode, std::uint64_t seed,
                                     const DensityParams& dp = {}) {
  if (cloud.empty()) throw Error(ErrorKind::empty_input, "density_variant on an empty cloud");
  const auto t = principal_coordinates(cloud);
  const auto [tmin_it, tmax_it] = std::minmax_element(t.begin(), t.end());
  const double tmin = *tmin_it;
  const double span = *tmax_it - tmin;
  const double band = dp.band_fraction * cloud.scale();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  DensityResult out;
  std::vector<Vec3> pts;
  std::vector<Vec3> nrm;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double keep = 1.0;
    if (mode == DensityMode::striped) {
      const auto b = static_cast<long long>(std::floor((t[i] - tmin) / band));
      keep = (b % 2 == 0) ? dp.keep_high : dp.keep_low;
    } else {
      const double s = span > 0 ? (t[i] - tmin) / span : 0.0;
      keep = dp.keep_high + (dp.ramp_end - dp.keep_high) * s;
    }
    if (uni(rng) < keep) {
      out.kept.push_back(i);
      pts.push_back(cloud.point(i));
      if (cloud.has_normals()) nrm.push_back(cloud.normal(i));
    }
  }
  if (pts.empty()) throw Error(ErrorKind::degenerate, "density variant kept no points");
  out.cloud = PointCloud(std::move(pts));
  if (cloud.has_normals()) out.cloud.set_normals(std::move(nrm));
  return out;
}

/// A unit vector perpendicular to n, chosen uniformly at random.
inline Vec3 random_perpendicular(const Vec3& n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (;;) {
    const Vec3 v(gauss(rng), gauss(rng), gauss(rng));
    const Vec3 p = v - v.dot(n) * n;
    if (p.norm() > 1e-6) return p.normalized();
  }
}

/// Replaces the annotated normals at `indices` with normals rotated by 90
/// degrees about a random in-plane axis.
inline void rotate_labels(PointCloud& cloud, const std::vector<std::size_t>& indices, std::uint64_t seed) {
  std::vector<Vec3> n = cloud.normals();
  std::mt19937_64 rng(seed);
  for (auto i : indices) n.at(i) = random_perpendicular(n.at(i), rng);
  cloud.set_normals(std::move(n));
}

inline std::size_t fraction_count(double fraction, std::size_t n) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(ErrorKind::parameter, "fraction outside [0,1]");
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

/// Rotates the labels of a random `fraction` of the points. Returns the
/// corrupted indices (ascending).
inline std::vector<std::size_t> corrupt_labels(PointCloud& cloud, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> all(cloud.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked),
              static_cast<std::ptrdiff_t>(fraction_count(fraction, cloud.size())), rng);
  rotate_labels(cloud, picked, rng());
  return picked;
}

/// Rotates the labels of the `fraction` of points displaced farthest from
/// their row-aligned clean source (ties: lower index). Returns the corrupted
/// indices (ascending).
inline std::vector<std::size_t> corrupt_farthest_labels(PointCloud& noisy, const PointCloud& clean, double fraction,
                                                        std::uint64_t seed) {
  if (noisy.size() != clean.size()) throw Error(ErrorKind::size, "noisy and clean clouds are not row-aligned");
  std::vector<std::size_t> order(noisy.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> d(noisy.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = (noisy.point(i) - clean.point(i)).squaredNorm();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
  order.resize(fraction_count(fraction, noisy.size()));
  std::sort(order.begin(), order.end());
  rotate_labels(noisy, order, seed);
  return order;
}

// ---------------------------------------------------------------------------
// Dataset manifests: one shape per line, whitespace-separated key=value
// tokens. Lines starting with '#' are comments. Keys:
//   name kind noise seed points xyz normals clean_xyz clean_normals
// File paths are relative to the manifest's directory.
// ---------------------------------------------------------------------------

struct DatasetEntry {
  std::string name;
  std::string kind;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::size_t points = 0;
  std::string xyz;
  std::string normals;
  std::string clean_xyz;
  std::string clean_normals;
};

inline void write_manifest(const std::string& path, const std::vector<DatasetEntry>& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  out << "# cwn-dataset 1\n";
  for (const auto& e : entries) {
    out << "name=" << e.name << " kind=" << e.kind << " noise=" << io::format_real(e.noise) << " seed=" << e.seed
        << " points=" << e.points << " xyz=" << e.xyz << " normals=" << e.normals;
    if (!e.clean_xyz.empty()) out << " clean_xyz=" << e.clean_xyz << " clean_normals=" << e.clean_normals;
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::io, "write failed for '" + path + "'");
}

inline std::vector<DatasetEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open manifest '" + path + "'");
  std::vector<DatasetEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    DatasetEntry e;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": bad token '" + tok + "'");
      }
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "name") e.name = val;
      else if (key == "kind") e.kind = val;
      else if (key == "noise") e.noise = io::detail::parse_number<double>(val, path, line_no);
      else if (key == "seed") e.seed = io::detail::parse_number<std::uint64_t>(val, path, line_no);
      else if (key == "points") e.points = io::detail::parse_number<std::uint64_t>(val, path, line_no);
      else if (key == "xyz") e.xyz = val;
      else if (key == "normals") e.normals = val;
      else if (key == "clean_xyz") e.clean_xyz = val;
      else if (key == "clean_normals") e.clean_normals = val;
      else throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (e.xyz.empty() || e.normals.empty()) {
      throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": xyz and normals are required");
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw Error(ErrorKind::empty_input, "manifest '" + path + "' lists no shapes");
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic datasets: every shape kind at every noise level, each noisy cloud
// paired with its clean source.
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::vector<ShapeKind> kinds{ShapeKind::sphere, ShapeKind::torus, ShapeKind::saddle};
  std::vector<double> noise_levels{0.0};
  std::size_t n_points = 2000;
  std::uint64_t seed = 1;
  std::optional<DensityMode> density;
  /// Fraction of labels rotated by 90 degrees: the points displaced farthest
  /// from the clean surface, or a random subset.
  double corrupt_fraction = 0.0;
  bool corrupt_random = false;
  /// Labels are corrupted only in clouds with at least this noise level
  /// (and strictly positive noise).
  double corrupt_min_noise = 0.0;
};

struct SynthShape {
  std::string name;
  ShapeKind kind = ShapeKind::sphere;
  double noise = 0.0;
  std::uint64_t seed = 0;
  PointCloud noisy;  // annotated normals (possibly corrupted)
  PointCloud clean;
  std::vector<std::size_t> corrupted;
};

inline std::string noise_tag(double level) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", level);
  return buf;
}

inline std::vector<SynthShape> synth_dataset(const SynthSpec& spec) {
  if (spec.kinds.empty() || spec.noise_levels.empty()) {
    throw Error(ErrorKind::parameter, "need at least one shape kind and one noise level");
  }
  std::vector<SynthShape> out;
  for (std::size_t ki = 0; ki < spec.kinds.size(); ++ki) {
    ShapeSpec ss;
    ss.kind = spec.kinds[ki];
    ss.n_points = spec.n_points;
    ss.seed = spec.seed * 1000003ULL + ki;
    PointCloud clean = gen_shape(ss);
    if (spec.density) clean = density_variant(clean, *spec.density, ss.seed ^ 0xd1b54a32d192ed03ULL).cloud;
    for (std::size_t li = 0; li < spec.noise_levels.size(); ++li) {
      const double level = spec.noise_levels[li];
      SynthShape s;
      s.kind = ss.kind;
      s.noise = level;
      s.seed = ss.seed * 31 + li + 1;
      s.name = std::string(to_string(ss.kind)) + "_" + noise_tag(level);
      s.clean = clean;
      s.noisy = add_noise(clean, level, s.seed);
      if (spec.corrupt_fraction > 0.0 && level > 0.0 && level >= spec.corrupt_min_noise) {
        const std::uint64_t cs = s.seed ^ 0x9e3779b97f4a7c15ULL;
        s.corrupted = spec.corrupt_random ? corrupt_labels(s.noisy, spec.corrupt_fraction, cs)
                                          : corrupt_farthest_labels(s.noisy, s.clean, spec.corrupt_fraction, cs);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

/// Writes `<name>.xyz/.normals` and `<name>.clean.xyz/.clean.normals` for
/// every shape plus `manifest.txt` into `dir`; returns the manifest path.
inline std::string write_dataset(const std::string& dir, const std::vector<SynthShape>& shapes) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create '" + dir + "': " + ec.message());
  std::vector<DatasetEntry> entries;
  for (const auto& s : shapes) {
    DatasetEntry e;
    e.name = s.name;
    e.kind = to_string(s.kind);
    e.noise = s.noise;
    e.seed = s.seed;
    e.points = s.noisy.size();
    e.xyz = s.name + ".xyz";
    e.normals = s.name + ".normals";
    e.clean_xyz = s.name + ".clean.xyz";
    e.clean_normals = s.name + ".clean.normals";
    io::save_xyz((fs::path(dir) / e.xyz).string(), s.noisy);
    io::save_normals((fs::path(dir) / e.normals).string(), s.noisy.normals());
    io::save_xyz((fs::path(dir) / e.clean_xyz).string(), s.clean);
    io::save_normals((fs::path(dir) / e.clean_normals).string(), s.clean.normals());
    entries.push_back(std::move(e));
  }
  const std::string manifest = (fs::path(dir) / "manifest.txt").string();
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace cwn
