#pragma once

#include "objmodel/frame.hpp"
#include "objmodel/neighbor_index.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <span>
#include <vector>

namespace objmodel {

/// Rigid transform in SE(3). `a * b` applies b first, then a.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }
  static Pose from_axis_angle(const Eigen::Vector3d& axis, double angle_rad,
                              const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& translation);
  /// Small-motion update from a 6-vector (rotation vector, translation).
  static Pose exp(const Eigen::Matrix<double, 6, 1>& twist);

  Pose inverse() const;
  Pose operator*(const Pose& other) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  Eigen::Vector3d rotate(const Eigen::Vector3d& v) const { return rotation * v; }

  Eigen::Quaterniond quaternion() const;
  Eigen::Matrix4d matrix() const;

  /// Rotation angle of this transform in radians, in [0, pi].
  double angle() const;

  /// Orthonormal with det +1 within tol, all entries finite.
  bool is_valid(double tol = 1e-9) const;

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Geodesic rotation distance (radians) and translation distance between poses.
double rotation_distance(const Pose& a, const Pose& b);
double translation_distance(const Pose& a, const Pose& b);

/// Point set with per-point attributes. Clouds built from a depth image are
/// organized: `width * height == size()`, and pixels without valid depth keep
/// their slot with `valid[i] == 0` so pixel index sets stay stable.
struct ObjectCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;
  std::vector<std::uint8_t> normal_valid;
  std::vector<Rgb> colors;
  std::vector<std::uint8_t> edge_flags;
  std::vector<double> weights;
  std::vector<std::uint8_t> valid;
  std::vector<std::int32_t> pixel;  // source pixel per point, -1 when unknown
  int width = 0;
  int height = 0;

  ObjectCloud() = default;
  explicit ObjectCloud(std::size_t n);

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool organized() const {
    return width > 0 && height > 0 && static_cast<std::size_t>(width) * static_cast<std::size_t>(height) == size();
  }
  bool is_valid(std::size_t i) const { return valid[i] != 0; }
  bool has_normals() const;
  std::size_t valid_count() const;

  void resize(std::size_t n);
  /// Append one valid point with the given attributes.
  void push_back(const Eigen::Vector3d& p, const Eigen::Vector3d& n, bool normal_ok, Rgb c,
                 bool edge, double weight, std::int32_t pixel_index = -1);
  void append(const ObjectCloud& other);

  /// Throws InvalidInput when parallel lists disagree, a valid normal is not
  /// unit length within 1e-6, or a weight leaves [0, 1].
  void check_invariants() const;

  /// Positions of valid points, in order.
  std::vector<Eigen::Vector3d> valid_points() const;
};

/// Sub-cloud made of the given point indices (the K[I] extraction). The result
/// is unorganized; `pixel` keeps the source pixel of each point.
ObjectCloud extract(const ObjectCloud& cloud, std::span<const std::int32_t> indices);

/// Drop invalid slots; result is unorganized.
ObjectCloud compact(const ObjectCloud& cloud);

/// Points rotated and translated, normals rotated, everything else kept.
ObjectCloud transform_cloud(const ObjectCloud& cloud, const Pose& pose);

/// Back-project every pixel. Pixels with zero or non-finite depth are kept as
/// invalid slots.
ObjectCloud depth_to_cloud(const RgbdFrame& frame, const CameraIntrinsics& intrinsics);

/// Back-project a single (possibly sub-pixel) image location at depth z.
Eigen::Vector3d back_project(const CameraIntrinsics& k, double u, double v, double z);
/// Pinhole projection; returns false when the point is behind the camera.
bool project(const CameraIntrinsics& k, const Eigen::Vector3d& p, Eigen::Vector2d& uv);

struct NormalEstimate {
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  double curvature = 0.0;
  bool valid = false;
};

/// Smallest-eigenvector plane normal of a neighbourhood. Rank < 2 (fewer than
/// three points, all coincident or collinear) yields `valid == false`.
NormalEstimate fit_normal(std::span<const Eigen::Vector3d> neighborhood);

/// k-nearest-neighbour normals for every valid point, oriented so that
/// dot(n, viewpoint - p) >= 0. Requires k >= 3 and at least k valid points.
ObjectCloud estimate_normals(const ObjectCloud& cloud, int k = 15,
                             const Eigen::Vector3d& viewpoint = Eigen::Vector3d::Zero());

/// Normals for an organized cloud, searching the k nearest points among a
/// (2 * half_window + 1)^2 pixel window; only pixels listed in `pixels` are
/// computed (all valid pixels when empty). Sensor at the origin.
ObjectCloud estimate_normals_organized(const ObjectCloud& cloud, int k = 15, int half_window = 4,
                                       std::span<const std::int32_t> pixels = {});

/// Weighted least-squares rigid transform T minimizing sum w_i |T src_i - dst_i|^2.
/// Throws EstimationError on fewer than three pairs, zero total weight, or a
/// collinear source set.
Pose rigid_from_correspondences(std::span<const Eigen::Vector3d> src,
                                std::span<const Eigen::Vector3d> dst,
                                std::span<const double> weights = {});

}  // namespace objmodel
