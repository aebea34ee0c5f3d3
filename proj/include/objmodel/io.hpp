#pragma once

#include "objmodel/frame.hpp"
#include "objmodel/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace objmodel::io {

namespace fs = std::filesystem;

// Images: binary netpbm. Colour as 8-bit P6, depth as 16-bit P5 (big-endian
// samples, maxval 65535).
void write_color_image(const fs::path& path, int width, int height, const std::vector<Rgb>& color);
void write_depth_image(const fs::path& path, int width, int height, const std::vector<std::uint16_t>& depth);
std::vector<Rgb> read_color_image(const fs::path& path, int& width, int& height);
std::vector<std::uint16_t> read_depth_image(const fs::path& path, int& width, int& height);

struct FrameRecord {
  std::int64_t frame_id = 0;
  fs::path color_path;
  fs::path depth_path;
  std::optional<double> timestamp;
};

/// Line-oriented sequence description:
///   intrinsics fx fy cx cy width height depth_scale
///   frame_id color_path depth_path [timestamp]
/// Relative image paths resolve against the manifest's directory.
struct SequenceManifest {
  CameraIntrinsics intrinsics;
  std::vector<FrameRecord> frames;
};

SequenceManifest read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const SequenceManifest& manifest);

/// Streams frames of a manifest in frame_id order. Construction validates the
/// intrinsics and checks that every referenced file exists.
class SequenceReader {
 public:
  explicit SequenceReader(const fs::path& manifest_path);

  const CameraIntrinsics& intrinsics() const { return manifest_.intrinsics; }
  const SequenceManifest& manifest() const { return manifest_; }
  std::size_t size() const { return manifest_.frames.size(); }

  /// Next frame, or nullopt at the end. Throws IoError naming the record on
  /// malformed images or size mismatch.
  std::optional<RgbdFrame> next();
  /// Random access by position in the manifest.
  RgbdFrame load(std::size_t position) const;
  /// Random access by frame id.
  RgbdFrame load_id(std::int64_t frame_id) const;
  void rewind() { cursor_ = 0; }

 private:
  SequenceManifest manifest_;
  std::size_t cursor_ = 0;
};

/// Writes one frame's images and returns the record pointing at them
/// (paths relative to `root`).
FrameRecord write_frame(const fs::path& root, const RgbdFrame& frame);

// Cloud files: PLY header, binary little-endian vertex records
//   float x y z nx ny nz, uchar red green blue, float weight, uchar edge_flag
// Only valid points are written; an invalid normal is stored as (0,0,0).
void write_cloud(const ObjectCloud& cloud, const fs::path& path);
ObjectCloud read_cloud(const fs::path& path);

/// Plain text, one pose per line: "frame_id tx ty tz qx qy qz qw"; '#' starts a comment.
using Trajectory = std::vector<std::pair<std::int64_t, Pose>>;
void write_trajectory(const Trajectory& poses, const fs::path& path);
Trajectory read_trajectory(const fs::path& path);
std::string format_trajectory_line(std::int64_t frame_id, const Pose& pose);

void write_intrinsics(const CameraIntrinsics& k, const fs::path& path);
CameraIntrinsics read_intrinsics(const fs::path& path);

/// Whitespace-separated pixel indices, one keyframe per file.
void write_indices(const std::vector<std::int32_t>& indices, const fs::path& path);
std::vector<std::int32_t> read_indices(const fs::path& path);

/// Shortest round-trippable decimal text for a double.
std::string format_number(double v);

}  // namespace objmodel::io
