#pragma once

#include "objmodel/frame.hpp"
#include "objmodel/geometry.hpp"
#include "objmodel/tracking.hpp"

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

namespace objmodel {

/// Plane n . p + offset = 0 with unit normal n, plus its supporting pixels.
struct PlaneModel {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;
  std::vector<std::int32_t> inlier_indices;

  double signed_distance(const Eigen::Vector3d& p) const { return normal.dot(p) + offset; }
  /// The same plane expressed after applying `pose` to space.
  PlaneModel transformed(const Pose& pose) const;
};

struct ObjectHypothesis {
  int hypothesis_id = 0;
  std::vector<std::int32_t> pixel_indices;  // sorted
  std::optional<PlaneModel> support_plane;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
};

/// Axis-aligned box in model coordinates.
struct RegionOfInterest {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  /// Throws InvalidInput unless min < max componentwise.
  void validate() const;
};

struct SegmentationConfig {
  int plane_iterations = 1000;
  double plane_threshold_m = 0.008;
  int plane_min_inliers = 500;
  double plane_normal_deg = 20.0;  // normals must agree with the plane to count as inliers
  int max_planes = 3;
  double background_fraction = 0.05;  // planes with fewer inliers (share of valid points) stay part of objects
  double cluster_angle_deg = 15.0;
  double cluster_distance_m = 0.02;
  bool cluster_convex = true;  // neighbours across a convex crease join regardless of the angle
  int min_cluster_size = 200;
  double voxel_m = 0.005;
  int normal_k = 15;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Repeated RANSAC plane extraction on an organized cloud with normals. Each
/// plane's inliers are removed before searching for the next; planes come
/// back ordered by support, largest first.
std::vector<PlaneModel> detect_planes(const ObjectCloud& cloud, int max_planes, const SegmentationConfig& config = {});

/// Region growing over the pixel grid, skipping `plane_inliers`. Neighbouring
/// pixels join when their points are closer than the cluster distance and
/// their normals differ by less than the cluster angle, or (cluster_convex)
/// they meet at a convex crease. Hypotheses are sorted by
/// size (largest first) and numbered in that order.
std::vector<ObjectHypothesis> smooth_clusters(const ObjectCloud& cloud, const std::vector<std::int32_t>& plane_inliers,
                                              const SegmentationConfig& config = {});

/// Planes plus clusters for one frame: depth to cloud, normals, plane
/// detection, clustering. Only planes holding at least background_fraction of
/// the valid points count as background; smaller ones (a box face) are left
/// to the clustering. Each hypothesis references the largest plane.
std::vector<ObjectHypothesis> object_hypotheses(const RgbdFrame& frame, const CameraIntrinsics& intrinsics,
                                                const SegmentationConfig& config = {});

/// Fill I^k with the valid pixels whose model-space point lies inside the box,
/// minus the dominant support plane of the frame (points on it or beneath it).
/// Throws StageError when every keyframe ends up empty.
void segment_by_roi(std::vector<Keyframe>& keyframes, const RegionOfInterest& roi, const CameraIntrinsics& intrinsics,
                    const SegmentationConfig& config = {});

/// Transfer a hypothesis chosen in keyframe `reference` to every keyframe:
/// its points define a voxel occupancy in model space (dilated by one voxel)
/// and each keyframe keeps the pixels falling into occupied voxels. Pixels on
/// the hypothesis' support plane (moved to each keyframe) are left out. The
/// reference keyframe receives the hypothesis pixels unchanged.
void propagate_selection(std::vector<Keyframe>& keyframes, std::size_t reference, const ObjectHypothesis& selected,
                         const CameraIntrinsics& intrinsics, const SegmentationConfig& config = {});

}  // namespace objmodel
