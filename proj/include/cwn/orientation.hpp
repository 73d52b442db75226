#pragma once

// Consistent normal orientation: MST sign propagation over a kNN graph, and
// sign correction of unoriented predictions against a reference field.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <queue>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "cwn/error.hpp"
#include "cwn/io.hpp"
#include "cwn/kd_index.hpp"
#include "cwn/point_cloud.hpp"

namespace cwn {

struct OrientedField {
  enum class Source { mst, external_file };
  std::vector<Vec3> normals;
  Source source = Source::mst;
  std::size_t components = 1;  // connected components of the propagation graph
};

inline constexpr std::size_t kDefaultOrientDegree = 10;

/// Orients `cloud.normals()` by propagating signs along a minimum spanning
/// tree of the symmetric kNN graph (edge cost 1 - |n_a·n_b|). Each connected
/// component is rooted at its highest point, whose normal is made to point
/// up (+z); `components` reports how many trees were grown.
inline OrientedField mst_orient(const PointCloud& cloud, std::size_t k = kDefaultOrientDegree) {
  if (k < 2) throw Error(ErrorKind::parameter, "orientation graph degree must be >= 2");
  const auto& normals = cloud.normals();
  const std::size_t n = cloud.size();
  OrientedField field;
  field.source = OrientedField::Source::mst;
  field.components = 0;
  field.normals = normals;  // unit length is a PointCloud invariant
  if (n == 0) return field;

  const KdIndex index(cloud);
  const std::size_t kk = std::min(k + 1, n);
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : index.knn(cloud.point(i), kk)) {
      if (j == i) continue;
      adj[i].push_back(j);
      adj[j].push_back(i);
    }
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  auto cost = [&](std::size_t a, std::size_t b) {
    return 1.0 - std::abs(field.normals[a].dot(field.normals[b]));
  };

  // Roots in order of decreasing z (ties to the lower index) so each
  // component starts from its own highest point.
  std::vector<std::size_t> by_height(n);
  std::iota(by_height.begin(), by_height.end(), std::size_t{0});
  std::stable_sort(by_height.begin(), by_height.end(),
                   [&](std::size_t a, std::size_t b) { return cloud.point(a).z() > cloud.point(b).z(); });

  std::vector<char> in_tree(n, 0);
  std::vector<std::vector<std::size_t>> children(n);
  using Item = std::tuple<double, std::size_t, std::size_t>;  // cost, node, parent
  for (auto root : by_height) {
    if (in_tree[root]) continue;
    ++field.components;
    if (field.normals[root].z() < 0.0) field.normals[root] = -field.normals[root];

    // Prim's algorithm over this component.
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    heap.emplace(0.0, root, n);
    while (!heap.empty()) {
      auto [c, v, p] = heap.top();
      heap.pop();
      if (in_tree[v]) continue;
      in_tree[v] = 1;
      if (p != n) children[p].push_back(v);
      for (auto w : adj[v]) {
        if (!in_tree[w]) heap.emplace(cost(v, w), w, v);
      }
    }

    // Depth-first sign propagation from the root.
    std::vector<std::size_t> stack{root};
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      for (auto c : children[v]) {
        if (field.normals[v].dot(field.normals[c]) < 0.0) field.normals[c] = -field.normals[c];
        stack.push_back(c);
      }
    }
  }
  return field;
}

/// Flips each predicted normal to agree with the reference; sign(0) = +1.
inline std::vector<Vec3> sign_correct(const std::vector<Vec3>& pred, const OrientedField& ref) {
  if (pred.size() != ref.normals.size()) {
    throw Error(ErrorKind::size, "prediction has " + std::to_string(pred.size()) + " normals, reference has " +
                                     std::to_string(ref.normals.size()));
  }
  std::vector<Vec3> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out[i] = ref.normals[i].dot(pred[i]) < 0.0 ? Vec3(-pred[i]) : pred[i];
  }
  return out;
}

/// Externally computed oriented normals, row-aligned with `cloud`.
inline OrientedField load_reference_field(const std::string& path, const PointCloud& cloud) {
  auto normals = io::load_normals(path);
  if (normals.size() != cloud.size()) {
    throw Error(ErrorKind::size, path + ": " + std::to_string(normals.size()) + " normals for " +
                                     std::to_string(cloud.size()) + " points");
  }
  OrientedField field;
  field.source = OrientedField::Source::external_file;
  field.normals = normalized(std::move(normals));
  return field;
}

}  // namespace cwn
