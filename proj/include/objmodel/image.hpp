#pragma once

#include "objmodel/frame.hpp"

#include <Eigen/Core>

#include <vector>

namespace objmodel {

/// Single-channel float image, intensities on the 0..255 scale.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.0f) {}

  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

  /// Bilinear sample; callers keep (x, y) inside [0, w-1] x [0, h-1].
  float sample(double x, double y) const;
  bool contains(double x, double y, double margin = 0.0) const {
    return x >= margin && y >= margin && x <= width - 1 - margin && y <= height - 1 - margin;
  }
};

GrayImage to_gray(const RgbdFrame& frame);

/// Level 0 is the input; each further level is Gaussian-blurred and halved.
std::vector<GrayImage> build_pyramid(const GrayImage& base, int levels);

/// Depth (meters) at a sub-pixel location: bilinear when the four neighbours
/// are valid and within `max_jump` of each other, nearest valid pixel
/// otherwise, 0 when nothing valid is close.
double sample_depth(const RgbdFrame& frame, double depth_scale, double u, double v, double max_jump = 0.02);

}  // namespace objmodel
