#ifndef EVROT_KD_TREE_HPP
#define EVROT_KD_TREE_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "evrot/geometry.hpp"

namespace evrot {

/// Exact k-nearest-neighbor index over 3D points.
///
/// Results are identical to a linear scan: squared Euclidean distance,
/// ties broken by the original point index. The tree is immutable after
/// build; concurrent queries are safe.
class KdTree3 {
 public:
  struct Neighbor {
    double dist2;
    std::uint32_t index;  // index into the point set the tree was built from
    bool operator<(const Neighbor& o) const {
      return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
    }
  };

  KdTree3() = default;

  void build(const std::vector<Vec3>& points) {
    const std::uint32_t n = static_cast<std::uint32_t>(points.size());
    pts_.resize(n);
    ids_.resize(n);
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.clear();
    nodes_.reserve(n / (kLeafSize / 2) + 8);
    if (n == 0) return;
    build_node(points, 0, n);
    // Reorder point storage to match leaves for cache locality.
    for (std::uint32_t i = 0; i < n; ++i) {
      pts_[i] = points[order_[i]];
      ids_[i] = order_[i];
    }
  }

  std::size_t size() const { return pts_.size(); }

  /// Exact k nearest neighbors of q, sorted by (distance, index).
  void knn(const Vec3& q, unsigned k, std::vector<Neighbor>& out) const {
    out.clear();
    if (k == 0 || pts_.empty()) return;
    if (k > pts_.size()) k = static_cast<unsigned>(pts_.size());
    out.reserve(k);
    search(0, q, k, out);
    std::sort(out.begin(), out.end());
  }

 private:
  static constexpr std::uint32_t kLeafSize = 12;

  struct Node {
    double split = 0.0;
    std::uint32_t begin = 0, end = 0;  // leaf payload range when right == 0
    std::uint32_t right = 0;           // index of right child; left child is self+1
    std::uint8_t dim = 0;
  };

  std::uint32_t build_node(const std::vector<Vec3>& points, std::uint32_t begin,
                           std::uint32_t end) {
    const std::uint32_t node_idx = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    if (end - begin <= kLeafSize) {
      nodes_[node_idx].begin = begin;
      nodes_[node_idx].end = end;
      return node_idx;
    }
    Vec3 lo = points[order_[begin]], hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points[order_[i]]);
      hi = hi.cwiseMax(points[order_[i]]);
    }
    int dim = 0;
    (hi - lo).maxCoeff(&dim);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points[a][dim] < points[b][dim];
                     });
    const double split = points[order_[mid]][dim];
    nodes_[node_idx].dim = static_cast<std::uint8_t>(dim);
    nodes_[node_idx].split = split;
    build_node(points, begin, mid);
    const std::uint32_t right = build_node(points, mid, end);
    nodes_[node_idx].right = right;
    return node_idx;
  }

  void search(std::uint32_t node_idx, const Vec3& q, unsigned k,
              std::vector<Neighbor>& best) const {
    const Node& node = nodes_[node_idx];
    if (node.right == 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const Neighbor cand{(pts_[i] - q).squaredNorm(), ids_[i]};
        if (best.size() < k) {
          best.push_back(cand);
          std::push_heap(best.begin(), best.end());
        } else if (cand < best.front()) {
          std::pop_heap(best.begin(), best.end());
          best.back() = cand;
          std::push_heap(best.begin(), best.end());
        }
      }
      return;
    }
    const double delta = q[node.dim] - node.split;
    const std::uint32_t near = delta < 0.0 ? node_idx + 1 : node.right;
    const std::uint32_t far = delta < 0.0 ? node.right : node_idx + 1;
    search(near, q, k, best);
    if (best.size() < k || delta * delta <= best.front().dist2) {
      search(far, q, k, best);
    }
  }

  std::vector<Vec3> pts_;             // leaf-ordered copies
  std::vector<std::uint32_t> ids_;    // original indices, leaf-ordered
  std::vector<std::uint32_t> order_;  // build-time permutation
  std::vector<Node> nodes_;
};

}  // namespace evrot

#endif  // EVROT_KD_TREE_HPP
