#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace objmodel {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Pinhole intrinsics plus the depth unit.
struct CameraIntrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  int width = 640;
  int height = 480;
  double depth_scale = 0.001;  // stored depth unit -> meters

  /// Throws InvalidInput when any invariant is violated.
  void validate() const;
  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Organized colour + depth image pair. Depth stays in raw sensor units
/// (16-bit); conversion to meters happens on access through depth_scale.
struct RgbdFrame {
  int width = 0;
  int height = 0;
  std::int64_t frame_id = 0;
  std::optional<double> timestamp;
  std::vector<Rgb> color;             // row-major, width * height
  std::vector<std::uint16_t> depth;   // row-major, width * height; 0 = invalid

  RgbdFrame() = default;
  RgbdFrame(int w, int h, std::int64_t id = 0);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  int index(int u, int v) const { return v * width + u; }
  bool in_bounds(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }

  /// Depth in meters, 0 when invalid.
  double depth_m(int u, int v, double depth_scale) const {
    return static_cast<double>(depth[static_cast<std::size_t>(index(u, v))]) * depth_scale;
  }

  /// Throws InvalidInput when colour and depth buffers disagree with the size.
  void validate() const;
};

}  // namespace objmodel
