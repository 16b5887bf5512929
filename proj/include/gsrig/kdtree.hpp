#pragma once

#include "gsrig/types.hpp"

#include <algorithm>
#include <queue>
#include <vector>

namespace gsrig {

// Median-split k-d tree over a fixed 3D point set. Queries are exact and
// deterministic: neighbors come back sorted by (distance, index), so equal
// distances always resolve to the smaller index.
class KdTree {
public:
  explicit KdTree(const Mat3X& points) : points_(points) {
    const int n = static_cast<int>(points_.rows());
    order_.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order_[static_cast<size_t>(i)] = i;
    nodes_.reserve(static_cast<size_t>(2 * n));
    if (n > 0) root_ = build(0, n, 0);
  }

  struct Hit {
    double dist2;
    int index;
  };

  int size() const { return static_cast<int>(points_.rows()); }

  // Index of the nearest point to q.
  int nearest(const Vec3& q) const {
    Hit best{std::numeric_limits<double>::infinity(), -1};
    nearest_rec(root_, q, best);
    return best.index;
  }

  // k nearest neighbors of q, ascending (distance, index). k is clamped
  // to the set size.
  std::vector<Hit> knn(const Vec3& q, int k) const {
    k = std::min(k, size());
    std::priority_queue<std::pair<double, int>> heap;  // max-heap on (dist2, -index)? see cmp below
    knn_rec(root_, q, k, heap);
    std::vector<Hit> out(static_cast<size_t>(heap.size()));
    for (size_t i = out.size(); i-- > 0;) {
      out[i] = {heap.top().first, -heap.top().second};
      heap.pop();
    }
    std::sort(out.begin(), out.end(), [](const Hit& a, const Hit& b) {
      return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
    });
    return out;
  }

private:
  struct Node {
    int axis = 0;
    int point = -1;
    int left = -1;
    int right = -1;
  };

  int build(int lo, int hi, int depth) {
    if (lo >= hi) return -1;
    int axis = depth % 3;
    int mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](int a, int b) {
                       double va = points_(a, axis), vb = points_(b, axis);
                       return va != vb ? va < vb : a < b;
                     });
    Node node;
    node.axis = axis;
    node.point = order_[static_cast<size_t>(mid)];
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    nodes_[static_cast<size_t>(id)].left = build(lo, mid, depth + 1);
    nodes_[static_cast<size_t>(id)].right = build(mid + 1, hi, depth + 1);
    return id;
  }

  void nearest_rec(int id, const Vec3& q, Hit& best) const {
    if (id < 0) return;
    const Node& node = nodes_[static_cast<size_t>(id)];
    Vec3 p = points_.row(node.point).transpose();
    double d2 = (p - q).squaredNorm();
    if (d2 < best.dist2 || (d2 == best.dist2 && node.point < best.index)) {
      best = {d2, node.point};
    }
    double delta = q[node.axis] - p[node.axis];
    int first = delta < 0 ? node.left : node.right;
    int second = delta < 0 ? node.right : node.left;
    nearest_rec(first, q, best);
    if (delta * delta <= best.dist2) nearest_rec(second, q, best);
  }

  // Heap keys are (dist2, -index): among equal distances the larger index
  // is evicted first, matching the sorted tie-break.
  void knn_rec(int id, const Vec3& q, int k,
               std::priority_queue<std::pair<double, int>>& heap) const {
    if (id < 0) return;
    const Node& node = nodes_[static_cast<size_t>(id)];
    Vec3 p = points_.row(node.point).transpose();
    double d2 = (p - q).squaredNorm();
    std::pair<double, int> key{d2, -node.point};
    if (static_cast<int>(heap.size()) < k) {
      heap.push(key);
    } else if (key < heap.top()) {
      heap.pop();
      heap.push(key);
    }
    double delta = q[node.axis] - p[node.axis];
    int first = delta < 0 ? node.left : node.right;
    int second = delta < 0 ? node.right : node.left;
    knn_rec(first, q, k, heap);
    if (static_cast<int>(heap.size()) < k || delta * delta <= heap.top().first)
      knn_rec(second, q, k, heap);
  }

  Mat3X points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace gsrig
