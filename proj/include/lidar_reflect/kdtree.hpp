#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace lidar_reflect {

// Static 3-d tree over a borrowed point array; the array must outlive the tree.
class KdTree {
 public:
  explicit KdTree(std::span<const Eigen::Vector3d> points, std::size_t leaf_size = 8);

  // k nearest neighbors of `query` sorted by ascending squared distance.
  // Equal distances are ordered by index so results are deterministic.
  void knn(const Eigen::Vector3d& query, std::size_t k, std::vector<std::uint32_t>& indices,
           std::vector<double>& sq_distances) const;

  std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  std::span<const Eigen::Vector3d> points_;
  std::size_t leaf_size_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace lidar_reflect
