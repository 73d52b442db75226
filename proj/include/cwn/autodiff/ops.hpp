#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cwn/autodiff/tensor.hpp"

namespace cwn::ad {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

inline MapC view(const Node& n) { return MapC(n.value.data(), n.rows, n.cols); }
inline MapC grad_view(const Node& n) { return MapC(n.grad.data(), n.rows, n.cols); }
inline Map grad_ref(Node& n) { return Map(n.grad.data(), n.rows, n.cols); }

[[noreturn]] inline void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw Error(ErrorKind::shape, std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

// b is either a's shape, a row (1 x c), a column (r x 1), or a scalar.
inline void check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  const bool rows_ok = b.rows() == a.rows() || b.rows() == 1;
  const bool cols_ok = b.cols() == a.cols() || b.cols() == 1;
  if (!rows_ok || !cols_ok) shape_error(op, a, b);
}

inline std::size_t bcast_index(const Node& b, std::size_t i, std::size_t j) {
  return (b.rows == 1 ? 0 : i) * b.cols + (b.cols == 1 ? 0 : j);
}

// Elementwise unary op; `deriv(x, y)` is dy/dx given input x and output y.
template <typename F, typename D>
Tensor unary(const Tensor& a, const char* op, F f, D deriv) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_result(a.rows(), a.cols(), std::move(out), op, {a}, [deriv](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      pa.grad[i] += self.grad[i] * deriv(pa.value[i], self.value[i]);
    }
  });
}

}  // namespace detail

inline Tensor constant(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor::from(rows, cols, std::move(v), false);
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) detail::shape_error("matmul", a, b);
  detail::RowMat c = detail::view(a.node()) * detail::view(b.node());
  std::vector<double> out(c.data(), c.data() + c.size());
  return detail::make_result(a.rows(), b.cols(), std::move(out), "matmul", {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    auto g = detail::grad_view(self);
    if (pa.requires_grad) detail::grad_ref(pa).noalias() += g * detail::view(pb).transpose();
    if (pb.requires_grad) detail::grad_ref(pb).noalias() += detail::view(pa).transpose() * g;
  });
}

namespace detail {
template <int Sign>
Tensor add_sub(const Tensor& a, const Tensor& b, const char* op) {
  check_broadcast(op, a, b);
  const Node& na = a.node();
  const Node& nb = b.node();
  std::vector<double> out(na.size());
  for (std::size_t i = 0; i < na.rows; ++i)
    for (std::size_t j = 0; j < na.cols; ++j)
      out[i * na.cols + j] = na.value[i * na.cols + j] + Sign * nb.value[bcast_index(nb, i, j)];
  return make_result(na.rows, na.cols, std::move(out), op, {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < self.rows; ++i)
        for (std::size_t j = 0; j < self.cols; ++j)
          pb.grad[bcast_index(pb, i, j)] += Sign * self.grad[i * self.cols + j];
  });
}
}  // namespace detail

/// a + b, where b may broadcast as a row, a column or a scalar.
inline Tensor add(const Tensor& a, const Tensor& b) { return detail::add_sub<1>(a, b, "add"); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::add_sub<-1>(a, b, "sub"); }

/// Elementwise product with the same broadcasting rule as add.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_broadcast("mul", a, b);
  const Node& na = a.node();
  const Node& nb = b.node();
  std::vector<double> out(na.size());
  for (std::size_t i = 0; i < na.rows; ++i)
    for (std::size_t j = 0; j < na.cols; ++j)
      out[i * na.cols + j] = na.value[i * na.cols + j] * nb.value[detail::bcast_index(nb, i, j)];
  return detail::make_result(na.rows, na.cols, std::move(out), "mul", {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.rows; ++i)
      for (std::size_t j = 0; j < self.cols; ++j) {
        const std::size_t k = i * self.cols + j;
        const std::size_t kb = detail::bcast_index(pb, i, j);
        if (pa.requires_grad) pa.grad[k] += self.grad[k] * pb.value[kb];
        if (pb.requires_grad) pb.grad[kb] += self.grad[k] * pa.value[k];
      }
  });
}

inline Tensor scalar_mul(const Tensor& a, double s) {
  return detail::unary(a, "scalar_mul", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline constexpr double kLeakySlope = 0.01;

inline Tensor leaky_relu(const Tensor& a, double alpha = kLeakySlope) {
  return detail::unary(a, "leaky_relu", [alpha](double x) { return x > 0.0 ? x : alpha * x; },
                       [alpha](double x, double) { return x > 0.0 ? 1.0 : alpha; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(a, "sigmoid",
                       [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
                       [](double, double y) { return y * (1.0 - y); });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

/// Square root; the derivative at 0 is taken as 0.
inline Tensor sqrt(const Tensor& a) {
  return detail::unary(a, "sqrt", [](double x) { return std::sqrt(x); },
                       [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// Elementwise minimum; on ties the gradient goes to `a`.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_error("minimum", a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] <= bv[i] ? av[i] : bv[i];
  return detail::make_result(a.rows(), a.cols(), std::move(out), "minimum", {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const bool take_a = pa.value[i] <= pb.value[i];
      if (take_a && pa.requires_grad) pa.grad[i] += self.grad[i];
      if (!take_a && pb.requires_grad) pb.grad[i] += self.grad[i];
    }
  });
}

/// Column-wise maximum over rows (n x c -> 1 x c). Ties go to the lower row.
inline Tensor max_pool_rows(const Tensor& a) {
  const Node& n = a.node();
  if (n.rows == 0) throw Error(ErrorKind::shape, "max_pool_rows on an empty tensor");
  std::vector<double> out(n.cols);
  std::vector<std::size_t> arg(n.cols, 0);
  for (std::size_t j = 0; j < n.cols; ++j) {
    double best = n.value[j];
    for (std::size_t i = 1; i < n.rows; ++i) {
      const double v = n.value[i * n.cols + j];
      if (v > best) {
        best = v;
        arg[j] = i;
      }
    }
    out[j] = best;
  }
  return detail::make_result(1, n.cols, std::move(out), "max_pool_rows", {a}, [arg = std::move(arg)](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (std::size_t j = 0; j < self.cols; ++j) pa.grad[arg[j] * self.cols + j] += self.grad[j];
  });
}

/// Grouped max-pool: output row g is the column-wise max over rows
/// `index[g*group .. g*group+group)` of `a`. Ties go to the earlier entry.
inline Tensor group_max_rows(const Tensor& a, const std::vector<std::size_t>& index, std::size_t group) {
  const Node& n = a.node();
  if (group == 0 || index.size() % group != 0) {
    throw Error(ErrorKind::shape, "group_max_rows: index count not a multiple of the group size");
  }
  const std::size_t groups = index.size() / group;
  for (auto r : index) {
    if (r >= n.rows) throw Error(ErrorKind::shape, "group_max_rows: row index out of range");
  }
  std::vector<double> out(groups * n.cols);
  std::vector<std::size_t> arg(groups * n.cols);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t j = 0; j < n.cols; ++j) {
      std::size_t best_row = index[g * group];
      double best = n.value[best_row * n.cols + j];
      for (std::size_t t = 1; t < group; ++t) {
        const std::size_t r = index[g * group + t];
        const double v = n.value[r * n.cols + j];
        if (v > best) {
          best = v;
          best_row = r;
        }
      }
      out[g * n.cols + j] = best;
      arg[g * n.cols + j] = best_row;
    }
  }
  return detail::make_result(groups, n.cols, std::move(out), "group_max_rows", {a},
                             [arg = std::move(arg)](Node& self) {
                               Node& pa = *self.parents[0];
                               if (!pa.requires_grad) return;
                               for (std::size_t k = 0; k < self.grad.size(); ++k) {
                                 pa.grad[arg[k] * self.cols + k % self.cols] += self.grad[k];
                               }
                             });
}

/// Selects rows (with repetition allowed).
inline Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows) {
  const Node& n = a.node();
  std::vector<double> out(rows.size() * n.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n.rows) throw Error(ErrorKind::shape, "gather_rows: row index out of range");
    std::copy_n(n.value.begin() + static_cast<std::ptrdiff_t>(rows[i] * n.cols), n.cols,
                out.begin() + static_cast<std::ptrdiff_t>(i * n.cols));
  }
  return detail::make_result(rows.size(), n.cols, std::move(out), "gather_rows", {a}, [rows](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < self.cols; ++j) pa.grad[rows[i] * self.cols + j] += self.grad[i * self.cols + j];
  });
}

/// Repeats a 1 x c row n times.
inline Tensor repeat_rows(const Tensor& a, std::size_t n) {
  if (a.rows() != 1) throw Error(ErrorKind::shape, "repeat_rows expects a row, got " + a.shape_str());
  std::vector<std::size_t> rows(n, 0);
  return gather_rows(a, rows);
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) detail::shape_error("concat_cols", a, b);
  const Node& na = a.node();
  const Node& nb = b.node();
  const std::size_t c = na.cols + nb.cols;
  std::vector<double> out(na.rows * c);
  for (std::size_t i = 0; i < na.rows; ++i) {
    std::copy_n(na.value.begin() + static_cast<std::ptrdiff_t>(i * na.cols), na.cols,
                out.begin() + static_cast<std::ptrdiff_t>(i * c));
    std::copy_n(nb.value.begin() + static_cast<std::ptrdiff_t>(i * nb.cols), nb.cols,
                out.begin() + static_cast<std::ptrdiff_t>(i * c + na.cols));
  }
  return detail::make_result(na.rows, c, std::move(out), "concat_cols", {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.rows; ++i) {
      if (pa.requires_grad)
        for (std::size_t j = 0; j < pa.cols; ++j) pa.grad[i * pa.cols + j] += self.grad[i * self.cols + j];
      if (pb.requires_grad)
        for (std::size_t j = 0; j < pb.cols; ++j)
          pb.grad[i * pb.cols + j] += self.grad[i * self.cols + pa.cols + j];
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  const Node& n = a.node();
  std::vector<double> out(n.size());
  for (std::size_t i = 0; i < n.rows; ++i)
    for (std::size_t j = 0; j < n.cols; ++j) out[j * n.rows + i] = n.value[i * n.cols + j];
  return detail::make_result(n.cols, n.rows, std::move(out), "transpose", {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (std::size_t i = 0; i < pa.rows; ++i)
      for (std::size_t j = 0; j < pa.cols; ++j) pa.grad[i * pa.cols + j] += self.grad[j * pa.rows + i];
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return detail::make_result(1, 1, {s}, "sum", {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (double& g : pa.grad) g += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw Error(ErrorKind::shape, "mean of an empty tensor");
  return scalar_mul(sum(a), 1.0 / static_cast<double>(a.size()));
}

inline constexpr double kNormGuard = 1e-12;

/// Row norms (n x c -> n x 1). Rows with norm below 1e-12 pass no gradient.
inline Tensor l2norm_rows(const Tensor& a) {
  const Node& n = a.node();
  std::vector<double> out(n.rows);
  for (std::size_t i = 0; i < n.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n.cols; ++j) s += n.value[i * n.cols + j] * n.value[i * n.cols + j];
    out[i] = std::sqrt(s);
  }
  return detail::make_result(n.rows, 1, std::move(out), "l2norm_rows", {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (std::size_t i = 0; i < self.rows; ++i) {
      const double norm = self.value[i];
      if (norm < kNormGuard) continue;
      for (std::size_t j = 0; j < pa.cols; ++j)
        pa.grad[i * pa.cols + j] += self.grad[i] * pa.value[i * pa.cols + j] / norm;
    }
  });
}

/// Scales each row to unit length. Rows with norm below 1e-12 are returned
/// unchanged and pass no gradient.
inline Tensor normalize_rows(const Tensor& a) {
  const Node& n = a.node();
  std::vector<double> out(n.value);
  std::vector<double> norms(n.rows);
  for (std::size_t i = 0; i < n.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n.cols; ++j) s += n.value[i * n.cols + j] * n.value[i * n.cols + j];
    norms[i] = std::sqrt(s);
    if (norms[i] >= kNormGuard)
      for (std::size_t j = 0; j < n.cols; ++j) out[i * n.cols + j] /= norms[i];
  }
  return detail::make_result(n.rows, n.cols, std::move(out), "normalize_rows", {a},
                             [norms = std::move(norms)](Node& self) {
                               Node& pa = *self.parents[0];
                               if (!pa.requires_grad) return;
                               const std::size_t c = self.cols;
                               for (std::size_t i = 0; i < self.rows; ++i) {
                                 if (norms[i] < kNormGuard) continue;
                                 double gy = 0.0;
                                 for (std::size_t j = 0; j < c; ++j) gy += self.grad[i * c + j] * self.value[i * c + j];
                                 for (std::size_t j = 0; j < c; ++j)
                                   pa.grad[i * c + j] += (self.grad[i * c + j] - gy * self.value[i * c + j]) / norms[i];
                               }
                             });
}

/// Row-wise cross product of two n x 3 tensors.
inline Tensor cross3(const Tensor& a, const Tensor& b) {
  if (a.cols() != 3 || b.cols() != 3 || a.rows() != b.rows()) detail::shape_error("cross3", a, b);
  const auto& x = a.values();
  const auto& y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* u = &x[3 * i];
    const double* v = &y[3 * i];
    out[3 * i + 0] = u[1] * v[2] - u[2] * v[1];
    out[3 * i + 1] = u[2] * v[0] - u[0] * v[2];
    out[3 * i + 2] = u[0] * v[1] - u[1] * v[0];
  }
  return detail::make_result(a.rows(), 3, std::move(out), "cross3", {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.rows; ++i) {
      const double* g = &self.grad[3 * i];
      const double* u = &pa.value[3 * i];
      const double* v = &pb.value[3 * i];
      // d(u x v) = du x v + u x dv; the adjoint of (. x v) is (v x g).
      if (pa.requires_grad) {
        pa.grad[3 * i + 0] += v[1] * g[2] - v[2] * g[1];
        pa.grad[3 * i + 1] += v[2] * g[0] - v[0] * g[2];
        pa.grad[3 * i + 2] += v[0] * g[1] - v[1] * g[0];
      }
      if (pb.requires_grad) {
        pb.grad[3 * i + 0] += g[1] * u[2] - g[2] * u[1];
        pb.grad[3 * i + 1] += g[2] * u[0] - g[0] * u[2];
        pb.grad[3 * i + 2] += g[0] * u[1] - g[1] * u[0];
      }
    }
  });
}

/// Row-wise inner products (n x c, n x c -> n x 1).
inline Tensor dot_rows(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_error("dot_rows", a, b);
  const std::size_t c = a.cols();
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += a.values()[i * c + j] * b.values()[i * c + j];
  return detail::make_result(a.rows(), 1, std::move(out), "dot_rows", {a, b}, [c](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.rows; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        if (pa.requires_grad) pa.grad[i * c + j] += self.grad[i] * pb.value[i * c + j];
        if (pb.requires_grad) pb.grad[i * c + j] += self.grad[i] * pa.value[i * c + j];
      }
  });
}

/// Softmax along each row.
inline Tensor softmax_rows(const Tensor& a) {
  const Node& n = a.node();
  std::vector<double> out(n.size());
  for (std::size_t i = 0; i < n.rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n.cols; ++j) mx = std::max(mx, n.value[i * n.cols + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n.cols; ++j) s += out[i * n.cols + j] = std::exp(n.value[i * n.cols + j] - mx);
    for (std::size_t j = 0; j < n.cols; ++j) out[i * n.cols + j] /= s;
  }
  return detail::make_result(n.rows, n.cols, std::move(out), "softmax_rows", {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    const std::size_t c = self.cols;
    for (std::size_t i = 0; i < self.rows; ++i) {
      double gy = 0.0;
      for (std::size_t j = 0; j < c; ++j) gy += self.grad[i * c + j] * self.value[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        pa.grad[i * c + j] += self.value[i * c + j] * (self.grad[i * c + j] - gy);
    }
  });
}

/// Rotation matrix of the quaternion (w, x, y, z), normalized internally.
/// Accepts a 1x4 or 4x1 tensor.
inline Tensor quat_to_rot(const Tensor& q) {
  if (q.size() != 4) throw Error(ErrorKind::shape, "quat_to_rot expects 4 values, got " + q.shape_str());
  const auto& v = q.values();
  const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
  if (len < kNormGuard) throw Error(ErrorKind::degenerate, "zero quaternion");
  const double w = v[0] / len, x = v[1] / len, y = v[2] / len, z = v[3] / len;
  std::vector<double> r = {
      1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
      2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y),
  };
  return detail::make_result(3, 3, std::move(r), "quat_to_rot", {q}, [len, w, x, y, z](Node& self) {
    Node& pq = *self.parents[0];
    if (!pq.requires_grad) return;
    const double* g = self.grad.data();
    // d(loss)/d(unit quaternion components)
    const double gw = -2 * z * g[1] + 2 * y * g[2] + 2 * z * g[3] - 2 * x * g[5] - 2 * y * g[6] + 2 * x * g[7];
    const double gx = 2 * y * g[1] + 2 * z * g[2] + 2 * y * g[3] - 4 * x * g[4] - 2 * w * g[5] + 2 * z * g[6] +
                      2 * w * g[7] - 4 * x * g[8];
    const double gy = -4 * y * g[0] + 2 * x * g[1] + 2 * w * g[2] + 2 * x * g[3] + 2 * z * g[5] - 2 * w * g[6] +
                      2 * z * g[7] - 4 * y * g[8];
    const double gz = -4 * z * g[0] - 2 * w * g[1] + 2 * x * g[2] + 2 * w * g[3] - 4 * z * g[4] + 2 * y * g[5] +
                      2 * x * g[6] + 2 * y * g[7];
    const double proj = w * gw + x * gx + y * gy + z * gz;
    pq.grad[0] += (gw - w * proj) / len;
    pq.grad[1] += (gx - x * proj) / len;
    pq.grad[2] += (gy - y * proj) / len;
    pq.grad[3] += (gz - z * proj) / len;
  });
}

}  // namespace cwn::ad
