#include "lidar_reflect/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <utility>

namespace lidar_reflect {

namespace {

struct Candidate {
  double sq_distance;
  std::uint32_t index;
  bool operator<(const Candidate& other) const {
    return sq_distance < other.sq_distance || (sq_distance == other.sq_distance && index < other.index);
  }
};

// Bounded sorted buffer; k is small (tens), so insertion sort beats a heap.
class NearestSet {
 public:
  explicit NearestSet(std::size_t k) : k_(k) { items_.reserve(k + 1); }

  double bound() const {
    return items_.size() < k_ ? std::numeric_limits<double>::infinity() : items_.back().sq_distance;
  }

  void offer(Candidate c) {
    if (items_.size() == k_ && !(c < items_.back())) return;
    items_.insert(std::upper_bound(items_.begin(), items_.end(), c), c);
    if (items_.size() > k_) items_.pop_back();
  }

  const std::vector<Candidate>& items() const { return items_; }

 private:
  std::size_t k_;
  std::vector<Candidate> items_;
};

}  // namespace

KdTree::KdTree(std::span<const Eigen::Vector3d> points, std::size_t leaf_size)
    : points_(points), leaf_size_(std::max<std::size_t>(leaf_size, 1)), order_(points.size()) {
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  Eigen::Vector3d lo = points_[order_[begin]];
  Eigen::Vector3d hi = lo;
  for (auto i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];

  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::knn(const Eigen::Vector3d& query, std::size_t k, std::vector<std::uint32_t>& indices,
                 std::vector<double>& sq_distances) const {
  indices.clear();
  sq_distances.clear();
  if (nodes_.empty() || k == 0) return;

  NearestSet best(k);
  // Explicit stack of (node, lower bound on squared distance to its region).
  std::vector<std::pair<std::int32_t, double>> stack;
  stack.emplace_back(0, 0.0);
  while (!stack.empty()) {
    const auto [id, lower] = stack.back();
    stack.pop_back();
    if (lower > best.bound()) continue;
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto idx = order_[i];
        best.offer({(points_[idx] - query).squaredNorm(), idx});
      }
      continue;
    }
    const double delta = query[node.axis] - node.split;
    const auto near = delta < 0.0 ? node.left : node.right;
    const auto far = delta < 0.0 ? node.right : node.left;
    // Far side first on the stack so the near side is explored first.
    stack.emplace_back(far, std::max(lower, delta * delta));
    stack.emplace_back(near, lower);
  }
  for (const auto& c : best.items()) {
    indices.push_back(c.index);
    sq_distances.push_back(c.sq_distance);
  }
}

}  // namespace lidar_reflect
