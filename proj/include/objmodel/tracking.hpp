#pragma once

#include "objmodel/frame.hpp"
#include "objmodel/geometry.hpp"
#include "objmodel/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace objmodel {

enum class FeatureStatus { alive, lost, refined };

struct TrackedFeature {
  int feature_id = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  std::optional<Eigen::Vector3d> point3d;  // camera coordinates of the frame it was measured in
  std::optional<Eigen::Vector3d> normal;   // set on keyframe features (local tangent plane)
  FeatureStatus status = FeatureStatus::alive;

  bool usable() const { return status != FeatureStatus::lost; }
};

struct TrackerConfig {
  int max_features = 400;
  int patch = 11;  // odd
  int pyramid_levels = 3;
  int max_iterations = 30;
  double convergence_px = 0.01;
  double max_residual = 20.0;      // mean absolute patch error, intensity units
  double min_spacing_px = 8.0;
  double min_corner_score = 4.0;   // smallest eigenvalue of the mean structure tensor
  double quality_level = 0.01;     // relative to the strongest corner
  double keyframe_translation_m = 0.05;
  double keyframe_rotation_deg = 10.0;
  double inlier_threshold_m = 0.01;
  int ransac_rounds = 100;
  int min_inliers = 6;
  double max_plane_angle_deg = 85.0;
  int max_consecutive_failures = 5;
  std::uint64_t seed = 1;

  void validate() const;
};

/// A stored frame: pose is camera-to-model (T^k); object_indices is I^k.
struct Keyframe {
  RgbdFrame frame;
  Pose pose;
  std::vector<TrackedFeature> features;
  std::vector<std::int32_t> object_indices;
};

/// Minimum-eigenvalue corners with minimum spacing, strongest first. Features
/// keep clear of `existing`; ids start at `first_id`. point3d is filled where
/// the depth at the corner is valid.
std::vector<TrackedFeature> detect_features(const RgbdFrame& frame, const CameraIntrinsics& intrinsics,
                                            int max_count, const TrackerConfig& config = {},
                                            std::span<const TrackedFeature> existing = {}, int first_id = 0);

/// Pyramidal translational patch alignment from prev to next. Features with a
/// residual above the limit or leaving the image become lost; surviving ones
/// get point3d from next's depth. `guesses` (optional, one per feature)
/// seeds the search position in next.
std::vector<TrackedFeature> track_frame(const RgbdFrame& prev, const RgbdFrame& next,
                                        std::span<const TrackedFeature> features,
                                        const CameraIntrinsics& intrinsics, const TrackerConfig& config = {},
                                        std::span<const Eigen::Vector2d> guesses = {});

/// Same as above on prebuilt pyramids.
std::vector<TrackedFeature> track_pyramids(const std::vector<GrayImage>& prev, const std::vector<GrayImage>& next,
                                           const RgbdFrame& next_frame, std::span<const TrackedFeature> features,
                                           const CameraIntrinsics& intrinsics, const TrackerConfig& config,
                                           std::span<const Eigen::Vector2d> guesses = {});

/// Fill normal (keyframe camera coordinates) for every keyframe feature with
/// valid depth, from the local depth neighbourhood.
void attach_normals(Keyframe& keyframe, const CameraIntrinsics& intrinsics, int k = 15);

/// Re-locate keyframe features in `frame`: each feature's tangent plane and the
/// keyframe-to-frame motion `keyframe_to_frame` induce a homography that warps
/// the keyframe patch into the frame, and the warped patch is aligned there.
/// Returns `features` with refined entries replaced (status refined) and
/// point3d re-read from the frame depth. Features whose plane is seen at more
/// than max_plane_angle_deg are left unchanged.
std::vector<TrackedFeature> refine_against_keyframe(const Keyframe& keyframe, const RgbdFrame& frame,
                                                    const Pose& keyframe_to_frame,
                                                    std::span<const TrackedFeature> features,
                                                    const CameraIntrinsics& intrinsics,
                                                    const TrackerConfig& config = {});

struct FramePose {
  std::int64_t frame_id = 0;
  Pose pose;             // camera-to-model
  Pose increment;        // previous tracked pose^-1 * pose
  bool tracked = false;  // false: failure, pose repeats the last good one
  int inliers = 0;
  int keyframe = -1;     // index into keyframes when this frame became one
};

struct TrackingResult {
  std::vector<Keyframe> keyframes;
  std::vector<FramePose> poses;
  std::vector<std::int64_t> failed_frames;
  bool aborted = false;
  std::string abort_reason;
};

/// Stateful visual odometry: frame-to-frame tracking, keyframe patch
/// refinement, pose from 3D-3D feature pairs inside a RANSAC loop.
class Tracker {
 public:
  Tracker(const CameraIntrinsics& intrinsics, TrackerConfig config, bool refine = true);

  /// Process the next frame. Returns the pose record (tracked == false on a
  /// failed frame). Throws StageError when the first frame cannot seed
  /// tracking or after too many consecutive failures.
  FramePose process(const RgbdFrame& frame);

  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  std::vector<Keyframe> take_keyframes() { return std::move(keyframes_); }

 private:
  struct Anchor {
    Eigen::Vector3d model;
    bool valid = false;
  };

  void add_keyframe(const RgbdFrame& frame, const Pose& pose, std::vector<TrackedFeature> features,
                    const std::vector<GrayImage>& pyramid);
  std::optional<Pose> estimate_pose(std::span<const TrackedFeature> features, const RgbdFrame& frame,
                                    std::vector<int>& inliers);

  CameraIntrinsics intrinsics_;
  TrackerConfig config_;
  bool refine_;
  std::mt19937_64 rng_;

  std::vector<Keyframe> keyframes_;
  std::vector<GrayImage> keyframe_pyramid_;
  std::vector<Anchor> anchors_;  // by feature id

  std::vector<GrayImage> prev_pyramid_;
  std::vector<TrackedFeature> prev_features_;
  Pose prev_pose_;
  std::optional<Pose> velocity_;
  bool started_ = false;
  bool last_failed_ = false;
  int consecutive_failures_ = 0;
  int next_feature_id_ = 0;
};

using FrameSource = std::function<std::optional<RgbdFrame>()>;

/// Runs a Tracker over the whole source. The first frame is the model origin.
/// Tracking failures are recorded per frame; too many in a row aborts with
/// the partial result (aborted == true).
TrackingResult track_sequence(const FrameSource& frames, const CameraIntrinsics& intrinsics,
                              const TrackerConfig& config = {}, bool refine = true);

}  // namespace objmodel
