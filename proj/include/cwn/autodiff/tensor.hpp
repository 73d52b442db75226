#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices of doubles. A Tensor is a shared handle to a graph node; ops in
// ops.hpp record closures that push gradients to their parents.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cwn/error.hpp"

namespace cwn::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // empty until needed
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  std::size_t size() const noexcept { return rows * cols; }
  bool is_leaf() const noexcept { return parents.empty(); }
  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

namespace detail {
inline bool& recording_disabled() {
  thread_local bool disabled = false;
  return disabled;
}
}  // namespace detail

/// Scope guard that stops graph recording on this thread. Forward values are
/// unaffected; results carry no parents.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::recording_disabled()) { detail::recording_disabled() = true; }
  ~NoGradGuard() { detail::recording_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool is_recording() { return !detail::recording_disabled(); }

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false) {
    if (values.size() != rows * cols) {
      throw Error(ErrorKind::shape, "value count " + std::to_string(values.size()) + " != " +
                                        std::to_string(rows) + "x" + std::to_string(cols));
    }
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(std::move(n));
  }
  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
    return from(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
  }
  static Tensor filled(std::size_t rows, std::size_t cols, double v) {
    return from(rows, cols, std::vector<double>(rows * cols, v));
  }
  static Tensor scalar(double v, bool requires_grad = false) { return from(1, 1, {v}, requires_grad); }
  static Tensor identity(std::size_t n) {
    auto t = zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) t.node_->value[i * n + i] = 1.0;
    return t;
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  std::size_t rows() const { return node().rows; }
  std::size_t cols() const { return node().cols; }
  std::size_t size() const { return node().size(); }
  std::string shape_str() const { return std::to_string(rows()) + "x" + std::to_string(cols()); }
  bool requires_grad() const { return node().requires_grad; }

  const std::vector<double>& values() const { return node().value; }
  std::vector<double>& mutable_values() { return node().value; }
  double operator()(std::size_t r, std::size_t c) const { return node().value[r * node().cols + c]; }
  double at(std::size_t i) const { return node().value.at(i); }
  double item() const {
    if (size() != 1) throw Error(ErrorKind::shape, "item() on a " + shape_str() + " tensor");
    return node().value[0];
  }

  /// Gradient buffer (zeros when nothing reached this tensor).
  std::vector<double> grad() const {
    const Node& n = node();
    if (n.grad.size() != n.value.size()) return std::vector<double>(n.value.size(), 0.0);
    return n.grad;
  }
  void zero_grad() {
    Node& n = node();
    if (n.requires_grad) n.grad.assign(n.value.size(), 0.0);
    else n.grad.clear();
  }

  Node& node() const {
    if (!node_) throw Error(ErrorKind::internal, "use of an undefined tensor");
    return *node_;
  }
  const NodePtr& ptr() const noexcept { return node_; }

 private:
  NodePtr node_;
};

namespace detail {

/// Creates a result node and, when recording and any input requires a
/// gradient, attaches the parents and the backward closure.
inline Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value, const char* op,
                          std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  n->op = op;
  if (is_recording()) {
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(inputs.size());
      for (auto& t : inputs) n->parents.push_back(t.ptr());
      n->backward = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

}  // namespace detail

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
/// gradient, then releases the interior of the graph.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) throw Error(ErrorKind::shape, "backward needs a scalar, got " + loss.shape_str());
  Node* root = &loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);
  }
  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->is_leaf() || !n->backward) continue;
    for (auto& p : n->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    n->backward(*n);
  }
  for (Node* n : order) {
    if (n->is_leaf()) continue;
    n->backward = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

}  // namespace cwn::ad
