#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "spheremap/voxel_grid.hpp"

namespace spheremap {

/// Static balanced k-D tree over obstacle and frontier points. Rebuilt from
/// scratch for every update iteration; all queries are exact.
class ObstacleIndex {
 public:
  ObstacleIndex() = default;

  explicit ObstacleIndex(std::vector<Vec3> points) : points_(std::move(points)) {
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 2);
      build(0, points_.size());
    }
  }

  ObstacleIndex(std::span<const Vec3> obstacles, std::span<const Vec3> frontiers) {
    points_.reserve(obstacles.size() + frontiers.size());
    points_.insert(points_.end(), obstacles.begin(), obstacles.end());
    points_.insert(points_.end(), frontiers.begin(), frontiers.end());
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 2);
      build(0, points_.size());
    }
  }

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  std::span<const Vec3> points() const noexcept { return points_; }

  /// Exact Euclidean distance to the closest point; +inf when empty.
  double nearest_distance(const Vec3& q) const {
    if (points_.empty()) return std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    search(0, q, best, best_idx);
    return std::sqrt(best);
  }

  /// Nearest point itself; undefined on an empty index.
  Vec3 nearest_point(const Vec3& q) const {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    search(0, q, best, best_idx);
    return points_[best_idx];
  }

  /// Indices into points() within distance r of q, unordered.
  std::vector<std::size_t> within_radius(const Vec3& q, double r) const {
    std::vector<std::size_t> out;
    if (!points_.empty()) collect(0, q, r * r, out);
    return out;
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::uint32_t lo, hi;
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
  };

  std::int32_t build(std::size_t lo, std::size_t hi) {
    const auto id = std::int32_t(nodes_.size());
    nodes_.push_back(Node{std::uint32_t(lo), std::uint32_t(hi)});
    if (hi - lo <= kLeafSize) return id;
    Vec3 mn = points_[lo], mx = points_[lo];
    for (std::size_t i = lo + 1; i < hi; ++i) {
      mn = mn.cwiseMin(points_[i]);
      mx = mx.cwiseMax(points_[i]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const std::size_t mid = (lo + hi) / 2;
    std::nth_element(points_.begin() + std::ptrdiff_t(lo), points_.begin() + std::ptrdiff_t(mid),
                     points_.begin() + std::ptrdiff_t(hi),
                     [axis](const Vec3& a, const Vec3& b) { return a[axis] < b[axis]; });
    const double split = points_[mid][axis];
    const std::int32_t left = build(lo, mid);
    const std::int32_t right = build(mid, hi);
    Node& n = nodes_[std::size_t(id)];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  void search(std::int32_t id, const Vec3& q, double& best, std::size_t& best_idx) const {
    const Node& n = nodes_[std::size_t(id)];
    if (n.left < 0) {
      for (std::size_t i = n.lo; i < n.hi; ++i) {
        const double d = (points_[i] - q).squaredNorm();
        if (d < best) {
          best = d;
          best_idx = i;
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::int32_t near = diff < 0.0 ? n.left : n.right;
    const std::int32_t far = diff < 0.0 ? n.right : n.left;
    search(near, q, best, best_idx);
    if (diff * diff < best) search(far, q, best, best_idx);
  }

  void collect(std::int32_t id, const Vec3& q, double r2, std::vector<std::size_t>& out) const {
    const Node& n = nodes_[std::size_t(id)];
    if (n.left < 0) {
      for (std::size_t i = n.lo; i < n.hi; ++i) {
        if ((points_[i] - q).squaredNorm() <= r2) out.push_back(i);
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::int32_t near = diff < 0.0 ? n.left : n.right;
    const std::int32_t far = diff < 0.0 ? n.right : n.left;
    collect(near, q, r2, out);
    if (diff * diff <= r2) collect(far, q, r2, out);
  }

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
};

inline ObstacleIndex build_obstacle_index(std::span<const Vec3> obstacles, std::span<const Vec3> frontiers) {
  return ObstacleIndex(obstacles, frontiers);
}

}  // namespace spheremap
