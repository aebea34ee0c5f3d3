#pragma once

#include "objmodel/frame.hpp"
#include "objmodel/geometry.hpp"
#include "objmodel/tracking.hpp"

#include <cstdint>
#include <vector>

namespace objmodel {

struct NoiseModelParams {
  double theta_max_deg = 60.0;
  double sigma_lateral = 0.002;    // meters
  double edge_depth_jump = 0.02;   // meters
  double grazing_cutoff_deg = 80.0;  // observations beyond this angle are dropped before fusion

  void validate() const;
};

/// Observation weight from the angle between surface normal and view ray
/// (degrees) and the distance to the closest depth-discontinuity point
/// (meters):
///   w = A * B,  A = 1 below theta_max, then falling linearly to 0 at 90 deg,
///               B = 1 - 0.5 * exp(-d^2 / sigma_L^2).
double noise_weight(double theta_deg, double edge_distance, const NoiseModelParams& params);

/// Mark valid pixels of an organized cloud that sit on a depth discontinuity:
/// an 8-neighbour is invalid, outside the image, or differs in depth by more
/// than edge_depth_jump.
ObjectCloud flag_depth_edges(const ObjectCloud& organized, const NoiseModelParams& params);

/// Angle (degrees) between a normal and the ray from the point to the sensor
/// at the origin.
double view_angle_deg(const Eigen::Vector3d& point, const Eigen::Vector3d& normal);

/// Noise-model weights for every valid point of an organized cloud with
/// normals and edge flags (camera coordinates). Points with an invalid normal
/// get weight 0. The edge distance is capped at 5 sigma_L.
ObjectCloud compute_weights(const ObjectCloud& organized, const NoiseModelParams& params);

/// A keyframe's object observations: camera-frame points with normals, edge
/// flags and weights, plus the keyframe pose.
struct WeightedView {
  std::int64_t id = 0;
  Pose pose;
  ObjectCloud cloud;
};

/// Edges, normals and weights on the full frame, then restricted to I^k.
WeightedView weighted_view(const Keyframe& keyframe, const CameraIntrinsics& intrinsics,
                           const NoiseModelParams& params, int normal_k = 15);

struct FusionConfig {
  double radius = 0.003;          // sideways reach of a group
  double normal_tolerance = 0.006;  // reach along the normal (depth noise)
  double w_min_total = 0.8;
  double normal_angle_deg = 30.0;
  double contradiction_sigmas = 3.0;
  int min_contradictions = 2;
  bool use_weights = true;  // false: plain averaging, every observation weight 1, nothing removed
  bool keep_light_groups = false;  // true: groups below w_min_total stay as separate raw points

  void validate() const;
};

struct FusionStats {
  std::size_t observations = 0;
  std::size_t dropped_grazing = 0;
  std::size_t removed_inconsistent = 0;
  std::size_t groups_averaged = 0;
  std::size_t kept_unaveraged = 0;
  std::size_t dropped_light = 0;
  std::size_t output = 0;
};

/// All observations in model coordinates, merged:
///  - observations at more than the grazing cutoff or with weight 0 are dropped;
///  - an observation with at least min_contradictions heavier observations from
///    other views lying behind it (normal offset below -contradiction_sigmas *
///    sigma_L, within `radius` sideways, compatible normal) is removed;
///  - remaining observations are grouped in a fixed order (heaviest first):
///    a group's centre starts at its seed and moves to the weighted mean of
///    its members until it settles, the members being the seed plus, per
///    other view, the compatible observation within `radius` sideways and
///    `normal_tolerance` along the normal that lies sideways closest to the
///    centre; a merged point never ends up farther than `radius` from all of
///    its members; groups whose weight sum reaches w_min_total become
///    one weighted-average point carrying the largest member weight; lighter
///    groups are dropped (or kept point by point with keep_light_groups).
/// View order does not affect the result. Poses are only read.
ObjectCloud fuse_observations(const std::vector<WeightedView>& views, const FusionConfig& config = {},
                              const NoiseModelParams& params = {}, FusionStats* stats = nullptr);

/// Union of all views in model coordinates, without any merging.
ObjectCloud assemble_model(const std::vector<WeightedView>& views);

}  // namespace objmodel
