#include "objmodel/neighbor_index.hpp"

#include <algorithm>
#include <numeric>

namespace objmodel {

namespace {

constexpr std::int32_t kLeafSize = 8;

bool hit_less(const NeighborIndex::Hit& a, const NeighborIndex::Hit& b) {
  if (a.sq_distance != b.sq_distance) return a.sq_distance < b.sq_distance;
  return a.index < b.index;
}

}  // namespace

NeighborIndex::NeighborIndex(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<std::int32_t>(points_.size()));
  }
}

std::int32_t NeighborIndex::build(std::int32_t begin, std::int32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  Eigen::Vector3d lo = points_[order_[begin]];
  Eigen::Vector3d hi = lo;
  for (std::int32_t i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as leaf

  const std::int32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::int32_t a, std::int32_t b) {
                     if (points_[a][axis] != points_[b][axis]) return points_[a][axis] < points_[b][axis];
                     return a < b;
                   });
  const double split = points_[order_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

std::optional<NeighborIndex::Hit> NeighborIndex::nearest(const Eigen::Vector3d& query,
                                                        double max_sq_distance) const {
  if (root_ < 0) return std::nullopt;
  Hit best;
  search_nearest(root_, query, best);
  if (best.index < 0 || best.sq_distance > max_sq_distance) return std::nullopt;
  return best;
}

void NeighborIndex::search_nearest(std::int32_t id, const Eigen::Vector3d& q, Hit& best) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (std::int32_t i = node.begin; i < node.end; ++i) {
      const std::int32_t idx = order_[i];
      const double d = (points_[idx] - q).squaredNorm();
      if (d < best.sq_distance || (d == best.sq_distance && idx < best.index)) best = Hit{idx, d};
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::int32_t near = diff < 0.0 ? node.left : node.right;
  const std::int32_t far = diff < 0.0 ? node.right : node.left;
  search_nearest(near, q, best);
  if (diff * diff <= best.sq_distance) search_nearest(far, q, best);
}

std::vector<NeighborIndex::Hit> NeighborIndex::knn(const Eigen::Vector3d& query, std::size_t k) const {
  std::vector<Hit> heap;
  if (root_ < 0 || k == 0) return heap;
  heap.reserve(k + 1);
  search_knn(root_, query, k, heap);
  std::sort_heap(heap.begin(), heap.end(), hit_less);
  return heap;
}

void NeighborIndex::search_knn(std::int32_t id, const Eigen::Vector3d& q, std::size_t k,
                               std::vector<Hit>& heap) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (std::int32_t i = node.begin; i < node.end; ++i) {
      const Hit h{order_[i], (points_[order_[i]] - q).squaredNorm()};
      if (heap.size() < k) {
        heap.push_back(h);
        std::push_heap(heap.begin(), heap.end(), hit_less);
      } else if (hit_less(h, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), hit_less);
        heap.back() = h;
        std::push_heap(heap.begin(), heap.end(), hit_less);
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::int32_t near = diff < 0.0 ? node.left : node.right;
  const std::int32_t far = diff < 0.0 ? node.right : node.left;
  search_knn(near, q, k, heap);
  if (heap.size() < k || diff * diff <= heap.front().sq_distance) search_knn(far, q, k, heap);
}

std::vector<NeighborIndex::Hit> NeighborIndex::radius(const Eigen::Vector3d& query, double r) const {
  std::vector<Hit> out;
  if (root_ < 0 || r < 0.0) return out;
  search_radius(root_, query, r * r, out);
  std::sort(out.begin(), out.end(), hit_less);
  return out;
}

void NeighborIndex::search_radius(std::int32_t id, const Eigen::Vector3d& q, double sq_radius,
                                  std::vector<Hit>& out) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (std::int32_t i = node.begin; i < node.end; ++i) {
      const double d = (points_[order_[i]] - q).squaredNorm();
      if (d <= sq_radius) out.push_back(Hit{order_[i], d});
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::int32_t near = diff < 0.0 ? node.left : node.right;
  const std::int32_t far = diff < 0.0 ? node.right : node.left;
  search_radius(near, q, sq_radius, out);
  if (diff * diff <= sq_radius) search_radius(far, q, sq_radius, out);
}

}  // namespace objmodel
