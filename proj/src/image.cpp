#include "objmodel/image.hpp"

#include <algorithm>
#include <cmath>

namespace objmodel {

float GrayImage::sample(double x, double y) const {
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, width - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, height - 1);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const float ax = static_cast<float>(x - x0);
  const float ay = static_cast<float>(y - y0);
  const float top = at(x0, y0) + ax * (at(x1, y0) - at(x0, y0));
  const float bottom = at(x0, y1) + ax * (at(x1, y1) - at(x0, y1));
  return top + ay * (bottom - top);
}

GrayImage to_gray(const RgbdFrame& frame) {
  GrayImage g(frame.width, frame.height);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const Rgb& c = frame.color[i];
    g.data[i] = 0.299f * c.r + 0.587f * c.g + 0.114f * c.b;
  }
  return g;
}

namespace {

GrayImage downsample(const GrayImage& src) {
  // separable [1 4 6 4 1] / 16 with clamped borders, then decimate
  static constexpr float k[5] = {1.f / 16, 4.f / 16, 6.f / 16, 4.f / 16, 1.f / 16};
  GrayImage tmp(src.width, src.height);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      float s = 0.f;
      for (int t = -2; t <= 2; ++t) s += k[t + 2] * src.at(std::clamp(x + t, 0, src.width - 1), y);
      tmp.at(x, y) = s;
    }
  GrayImage out((src.width + 1) / 2, (src.height + 1) / 2);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      float s = 0.f;
      for (int t = -2; t <= 2; ++t) s += k[t + 2] * tmp.at(2 * x, std::clamp(2 * y + t, 0, src.height - 1));
      out.at(x, y) = s;
    }
  return out;
}

}  // namespace

std::vector<GrayImage> build_pyramid(const GrayImage& base, int levels) {
  std::vector<GrayImage> pyr;
  pyr.reserve(static_cast<std::size_t>(std::max(levels, 1)));
  pyr.push_back(base);
  for (int l = 1; l < levels; ++l) {
    if (pyr.back().width < 16 || pyr.back().height < 16) break;
    pyr.push_back(downsample(pyr.back()));
  }
  return pyr;
}

double sample_depth(const RgbdFrame& frame, double depth_scale, double u, double v, double max_jump) {
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  if (x0 < 0 || y0 < 0 || x0 >= frame.width || y0 >= frame.height) return 0.0;
  const int x1 = std::min(x0 + 1, frame.width - 1);
  const int y1 = std::min(y0 + 1, frame.height - 1);
  const double d00 = frame.depth_m(x0, y0, depth_scale);
  const double d10 = frame.depth_m(x1, y0, depth_scale);
  const double d01 = frame.depth_m(x0, y1, depth_scale);
  const double d11 = frame.depth_m(x1, y1, depth_scale);
  const double lo = std::min({d00, d10, d01, d11});
  const double hi = std::max({d00, d10, d01, d11});
  const double ax = u - x0;
  const double ay = v - y0;
  if (lo > 0.0 && hi - lo <= max_jump) {
    const double top = d00 + ax * (d10 - d00);
    const double bottom = d01 + ax * (d11 - d01);
    return top + ay * (bottom - top);
  }
  const int xn = ax < 0.5 ? x0 : x1;
  const int yn = ay < 0.5 ? y0 : y1;
  return frame.depth_m(xn, yn, depth_scale);
}

}  // namespace objmodel
