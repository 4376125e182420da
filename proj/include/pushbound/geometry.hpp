#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pushbound/neighbor_table.hpp"

namespace pushbound {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  double dot(const Point3& o) const { return x * o.x + y * o.y + z * o.z; }
  double squared_norm() const { return x * x + y * y + z * z; }
  double norm() const { return std::sqrt(squared_norm()); }
};

inline double squared_distance(const Point3& a, const Point3& b) { return (a - b).squared_norm(); }

// Exact k-nearest-neighbor search over an immutable point set. Results match
// a brute-force linear scan: ascending distance, ties broken by lowest index.
// Queries are safe from multiple threads after construction.
class KdTree {
 public:
  explicit KdTree(std::vector<Point3> points, std::size_t leaf_size = 16);

  // k nearest points to `query`. `exclude_index` (when >= 0) omits that
  // dataset index, used for self-exclusion when the query is a dataset point.
  std::vector<std::uint32_t> knn(const Point3& query, std::size_t k,
                                 std::int64_t exclude_index = -1) const;

  // Convenience for dataset points, matching the exclude-self contract.
  std::vector<std::uint32_t> knn_of_point(std::size_t index, std::size_t k,
                                          bool exclude_self) const;

  // Distance to the nearest dataset point (no exclusion).
  double nearest_distance(const Point3& query) const;

  std::size_t size() const { return points_.size(); }
  const std::vector<Point3>& points() const { return points_; }

 private:
  struct BuildNode {
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t begin = 0;  // leaf range into order_
    std::uint32_t end = 0;
    double split = 0.0;
    std::int8_t axis = -1;  // -1 for leaves
  };

  struct Candidate {  // max-heap entry ordered worst-first
    double dist2;
    std::uint32_t index;
    bool operator<(const Candidate& o) const {
      if (dist2 != o.dist2) return dist2 < o.dist2;
      return index < o.index;
    }
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node_index, const Point3& query, std::size_t k,
              std::int64_t exclude_index, std::vector<Candidate>& heap) const;

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;  // permutation grouped by leaf
  std::vector<BuildNode> nodes_;
  std::size_t leaf_size_;
};

// Greedy max-min subsampling: picks seed_index first, then repeatedly the
// point farthest from the current selection. Ties go to the lowest index.
std::vector<std::uint32_t> farthest_point_sample(std::span<const Point3> points, std::size_t m,
                                                 std::size_t seed_index = 0);

// Multi-resolution hierarchy shared by the encoder and the decoder streams.
// Level 0 is the full cloud; each coarser level is an FPS subset of the
// previous one.
struct LevelPyramid {
  // points[l]: positions at level l (points[0] == input cloud)
  std::vector<std::vector<Point3>> points;
  // parent_indices[l] (l >= 1): indices of level-l points into level l-1
  std::vector<std::vector<std::uint32_t>> parent_indices;
  // up_neighbors[l] (l >= 1): for each level-(l-1) point, k_up nearest level-l points
  std::vector<NeighborTable> up_neighbors;
  // group_neighbors[l] (l >= 1): for each level-l point, k_group nearest level-(l-1) points
  std::vector<NeighborTable> group_neighbors;

  std::size_t levels() const { return points.size(); }
};

LevelPyramid build_pyramid(std::span<const Point3> points, std::span<const std::size_t> level_sizes,
                           std::size_t k_up, std::size_t k_group, std::size_t fps_seed_index = 0);

}  // namespace pushbound
