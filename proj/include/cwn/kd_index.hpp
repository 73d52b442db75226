#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include "cwn/error.hpp"
#include "cwn/point_cloud.hpp"

namespace cwn {

/// Immutable 3-d tree over a snapshot of positions.
///
/// Queries are exact and ordered by (squared distance, index), so results
/// match a brute-force scan including ties. Concurrent const queries are safe.
class KdIndex {
 public:
  struct Neighbor {
    std::size_t index;
    double dist2;
  };

  KdIndex() = default;
  explicit KdIndex(const PointCloud& cloud) : KdIndex(cloud.points()) {}
  explicit KdIndex(std::vector<Vec3> points) : points_(std::move(points)) {
    checksum_ = fnv1a(points_);
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 2);
      build(0, points_.size());
    }
  }

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  std::uint64_t checksum() const noexcept { return checksum_; }
  const std::vector<Vec3>& points() const noexcept { return points_; }

  /// The k nearest indices ascending by distance (ties: lower index first).
  std::vector<std::size_t> knn(const Vec3& q, std::size_t k) const {
    auto nb = knn_with_distances(q, k);
    std::vector<std::size_t> out(nb.size());
    for (std::size_t i = 0; i < nb.size(); ++i) out[i] = nb[i].index;
    return out;
  }

  std::vector<Neighbor> knn_with_distances(const Vec3& q, std::size_t k) const {
    if (k == 0) throw Error(ErrorKind::size, "knn requires k >= 1");
    if (k > points_.size()) {
      throw Error(ErrorKind::size, "knn k=" + std::to_string(k) + " exceeds point count " +
                                       std::to_string(points_.size()));
    }
    std::priority_queue<Neighbor, std::vector<Neighbor>, Worse> heap;
    search(0, q, k, heap);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = heap.top();
      heap.pop();
    }
    return out;
  }

  /// Argmin of Euclidean distance and the distance itself.
  std::pair<std::size_t, double> nearest(const Vec3& q) const {
    if (points_.empty()) throw Error(ErrorKind::empty_input, "nearest on an empty index");
    auto nb = knn_with_distances(q, 1);
    return {nb[0].index, std::sqrt(nb[0].dist2)};
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::size_t begin, end;  // range into order_
    int axis = -1;           // -1 for leaves
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  // Orders the heap so top() is the current worst candidate.
  struct Worse {
    bool operator()(const Neighbor& a, const Neighbor& b) const {
      if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
      return a.index < b.index;
    }
  };

  static bool better(const Neighbor& a, const Neighbor& b) { return Worse{}(a, b); }

  static std::uint64_t fnv1a(const std::vector<Vec3>& pts) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : pts) {
      for (int d = 0; d < 3; ++d) {
        std::uint64_t bits;
        const double v = p[d];
        std::memcpy(&bits, &v, sizeof bits);
        for (int b = 0; b < 8; ++b) {
          h ^= (bits >> (8 * b)) & 0xffU;
          h *= 1099511628211ULL;
        }
      }
    }
    return h;
  }

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return id;

    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return id;  // all coincident: keep as leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  template <typename Heap>
  void search(std::size_t node_id, const Vec3& q, std::size_t k, Heap& heap) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        const Neighbor cand{idx, (points_[idx] - q).squaredNorm()};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (better(cand, heap.top())) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    // Left holds coordinates <= split, right holds >= split.
    const double diff = q[node.axis] - node.split;
    const std::size_t near = diff <= 0 ? node.left : node.right;
    const std::size_t far = diff <= 0 ? node.right : node.left;
    search(near, q, k, heap);
    // Equal distances must still be visited so the lower index can win a tie.
    if (heap.size() < k || diff * diff <= heap.top().dist2) search(far, q, k, heap);
  }

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::uint64_t checksum_ = 0;
};

}  // namespace cwn
