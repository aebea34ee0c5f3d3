#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace objmodel {

/// Exact k-d tree over a fixed 3D point set.
///
/// Queries never approximate: `nearest` returns a point at minimal Euclidean
/// distance, `knn` the k closest sorted ascending, `radius` every point inside
/// the ball. Squared distances are computed as `(p - q).squaredNorm()` so they
/// compare bit-exactly against a linear scan using the same expression.
class NeighborIndex {
 public:
  struct Hit {
    int index = -1;
    double sq_distance = std::numeric_limits<double>::infinity();
  };

  NeighborIndex() = default;
  explicit NeighborIndex(std::vector<Eigen::Vector3d> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Eigen::Vector3d& point(int i) const { return points_[static_cast<std::size_t>(i)]; }
  const std::vector<Eigen::Vector3d>& points() const { return points_; }

  /// Closest point with squared distance <= max_sq_distance, if any.
  std::optional<Hit> nearest(const Eigen::Vector3d& query,
                             double max_sq_distance = std::numeric_limits<double>::infinity()) const;

  /// Up to k closest points, ascending by distance (ties broken by index).
  std::vector<Hit> knn(const Eigen::Vector3d& query, std::size_t k) const;

  /// All points within `radius` (inclusive), ascending by distance.
  std::vector<Hit> radius(const Eigen::Vector3d& query, double radius) const;

 private:
  struct Node {
    // Leaf when axis < 0: [begin, end) indexes into order_.
    std::int32_t begin = 0;
    std::int32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t axis = -1;
    double split = 0.0;
  };

  std::int32_t build(std::int32_t begin, std::int32_t end);
  void search_nearest(std::int32_t node, const Eigen::Vector3d& q, Hit& best) const;
  void search_knn(std::int32_t node, const Eigen::Vector3d& q, std::size_t k,
                  std::vector<Hit>& heap) const;
  void search_radius(std::int32_t node, const Eigen::Vector3d& q, double sq_radius,
                     std::vector<Hit>& out) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace objmodel
