#include "pushbound/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace pushbound {

namespace {

double axis_value(const Point3& p, std::int8_t axis) {
  switch (axis) {
    case 0: return p.x;
    case 1: return p.y;
    default: return p.z;
  }
}

}  // namespace

KdTree::KdTree(std::vector<Point3> points, std::size_t leaf_size)
    : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  BuildNode node;
  node.begin = begin;
  node.end = end;
  if (end - begin <= leaf_size_) {
    nodes_.push_back(node);
    return static_cast<std::int32_t>(nodes_.size()) - 1;
  }

  // split on the widest axis at the median
  Point3 lo = points_[order_[begin]], hi = lo;
  for (std::uint32_t i = begin + 1; i < end; ++i) {
    const Point3& p = points_[order_[i]];
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  const Point3 extent = hi - lo;
  std::int8_t axis = 0;
  if (extent.y > axis_value(extent, axis)) axis = 1;
  if (extent.z > axis_value(extent, axis)) axis = 2;

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     return axis_value(points_[a], axis) < axis_value(points_[b], axis);
                   });

  node.axis = axis;
  node.split = axis_value(points_[order_[mid]], axis);
  const std::int32_t self = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(node);
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void KdTree::search(std::int32_t node_index, const Point3& query, std::size_t k,
                    std::int64_t exclude_index, std::vector<Candidate>& heap) const {
  const BuildNode& node = nodes_[node_index];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::uint32_t idx = order_[i];
      if (static_cast<std::int64_t>(idx) == exclude_index) continue;
      const Candidate cand{squared_distance(query, points_[idx]), idx};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }

  const double delta = axis_value(query, node.axis) - node.split;
  const std::int32_t near = delta < 0.0 ? node.left : node.right;
  const std::int32_t far = delta < 0.0 ? node.right : node.left;
  search(near, query, k, exclude_index, heap);
  // The far side can still hold an equal-distance point with a lower index,
  // so prune only on strict inequality.
  if (heap.size() < k || delta * delta <= heap.front().dist2) {
    search(far, query, k, exclude_index, heap);
  }
}

std::vector<std::uint32_t> KdTree::knn(const Point3& query, std::size_t k,
                                       std::int64_t exclude_index) const {
  const std::size_t available =
      points_.size() - (exclude_index >= 0 && exclude_index < static_cast<std::int64_t>(points_.size()) ? 1 : 0);
  if (k > available)
    throw std::invalid_argument("knn: k=" + std::to_string(k) + " exceeds available points (" +
                                std::to_string(available) + ")");
  std::vector<Candidate> heap;
  heap.reserve(k + 1);
  if (k > 0) search(0, query, k, exclude_index, heap);
  std::sort_heap(heap.begin(), heap.end());
  std::vector<std::uint32_t> result(heap.size());
  for (std::size_t i = 0; i < heap.size(); ++i) result[i] = heap[i].index;
  return result;
}

std::vector<std::uint32_t> KdTree::knn_of_point(std::size_t index, std::size_t k,
                                                bool exclude_self) const {
  return knn(points_.at(index), k, exclude_self ? static_cast<std::int64_t>(index) : -1);
}

double KdTree::nearest_distance(const Point3& query) const {
  const auto idx = knn(query, 1);
  return (points_[idx[0]] - query).norm();
}

std::vector<std::uint32_t> farthest_point_sample(std::span<const Point3> points, std::size_t m,
                                                 std::size_t seed_index) {
  const std::size_t n = points.size();
  if (m < 1 || m > n)
    throw std::invalid_argument("farthest_point_sample: m=" + std::to_string(m) +
                                " out of range [1, " + std::to_string(n) + "]");
  if (seed_index >= n)
    throw std::invalid_argument("farthest_point_sample: seed index out of range");

  std::vector<std::uint32_t> selected;
  selected.reserve(m);
  selected.push_back(static_cast<std::uint32_t>(seed_index));

  std::vector<double> best_dist2(n);
  for (std::size_t i = 0; i < n; ++i) best_dist2[i] = squared_distance(points[i], points[seed_index]);

  while (selected.size() < m) {
    std::uint32_t far_idx = 0;
    double far_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (best_dist2[i] > far_d2) {  // strict > keeps the lowest index on ties
        far_d2 = best_dist2[i];
        far_idx = static_cast<std::uint32_t>(i);
      }
    }
    selected.push_back(far_idx);
    const Point3& p = points[far_idx];
    for (std::size_t i = 0; i < n; ++i)
      best_dist2[i] = std::min(best_dist2[i], squared_distance(points[i], p));
  }
  return selected;
}

LevelPyramid build_pyramid(std::span<const Point3> points, std::span<const std::size_t> level_sizes,
                           std::size_t k_up, std::size_t k_group, std::size_t fps_seed_index) {
  if (level_sizes.empty())
    throw std::invalid_argument("build_pyramid: no level sizes");
  if (level_sizes[0] != points.size())
    throw std::invalid_argument("build_pyramid: first level size " + std::to_string(level_sizes[0]) +
                                " must equal point count " + std::to_string(points.size()));
  for (std::size_t l = 1; l < level_sizes.size(); ++l)
    if (level_sizes[l] >= level_sizes[l - 1] || level_sizes[l] == 0)
      throw std::invalid_argument("build_pyramid: level sizes must strictly decrease and stay positive");

  LevelPyramid pyramid;
  pyramid.points.emplace_back(points.begin(), points.end());
  pyramid.parent_indices.emplace_back();  // level 0 has no parents
  pyramid.up_neighbors.emplace_back();
  pyramid.group_neighbors.emplace_back();

  for (std::size_t l = 1; l < level_sizes.size(); ++l) {
    const auto& prev = pyramid.points[l - 1];
    const auto picked = farthest_point_sample(prev, level_sizes[l], fps_seed_index);
    std::vector<Point3> level_points(picked.size());
    for (std::size_t i = 0; i < picked.size(); ++i) level_points[i] = prev[picked[i]];

    KdTree coarse_tree(level_points);
    NeighborTable up(prev.size(), std::min(k_up, level_points.size()));
    for (std::size_t i = 0; i < prev.size(); ++i) {
      const auto nn = coarse_tree.knn(prev[i], up.k);
      for (std::size_t j = 0; j < up.k; ++j) up.at(i, j) = nn[j];
    }

    KdTree fine_tree(prev);
    NeighborTable groups(level_points.size(), std::min(k_group, prev.size()));
    for (std::size_t i = 0; i < level_points.size(); ++i) {
      const auto nn = fine_tree.knn(level_points[i], groups.k);
      for (std::size_t j = 0; j < groups.k; ++j) groups.at(i, j) = nn[j];
    }

    pyramid.points.push_back(std::move(level_points));
    pyramid.parent_indices.push_back(picked);
    pyramid.up_neighbors.push_back(std::move(up));
    pyramid.group_neighbors.push_back(std::move(groups));
  }
  return pyramid;
}

}  // namespace pushbound
