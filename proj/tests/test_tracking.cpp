#include "objmodel/error.hpp"
#include "objmodel/synth.hpp"
#include "objmodel/tracking.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace objmodel;

namespace {

synth::SyntheticScene sphere_scene(int count, double arc_deg, bool noiseless = false) {
  synth::SyntheticScene s;
  s.object = synth::place_on_table(make_sphere(0.06));
  s.trajectory = synth::orbit(s.object_center(), 1.0, 40.0, count, arc_deg);
  s.noiseless = noiseless;
  return s;
}

// Frame whose colour is a smooth random texture sampled at (u + du, v + dv).
RgbdFrame shifted_texture(int w, int h, double du, double dv) {
  RgbdFrame f(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const double x = u + du, y = v + dv;
      const double g = 128 + 50 * std::sin(0.21 * x + 0.05 * y) * std::cos(0.17 * y - 0.03 * x) +
                       40 * std::sin(0.07 * x * 0.9 + 0.11 * y + 1.3 * std::sin(0.05 * y));
      const auto c = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
      f.color[static_cast<std::size_t>(f.index(u, v))] = {c, c, c};
      f.depth[static_cast<std::size_t>(f.index(u, v))] = 1000;
    }
  return f;
}

}  // namespace

TEST(TrackerConfig, Validation) {
  TrackerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.patch = 10;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.inlier_threshold_m = -1;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(DetectFeatures, SpacedAndWithDepth) {
  const auto s = sphere_scene(1, 0.0);
  const RgbdFrame f = synth::Renderer(s).render_frame(0);
  TrackerConfig cfg;
  const auto feats = detect_features(f, s.intrinsics, 300, cfg);
  ASSERT_GT(feats.size(), 100u);
  EXPECT_LE(feats.size(), 300u);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    EXPECT_EQ(feats[i].feature_id, int(i));
    for (std::size_t j = 0; j < i; ++j) EXPECT_GE((feats[i].pixel - feats[j].pixel).norm(), cfg.min_spacing_px);
  }
  std::size_t with_depth = 0;
  for (const auto& t : feats) with_depth += t.point3d ? 1 : 0;
  EXPECT_GT(with_depth, feats.size() * 9 / 10);
}

TEST(TrackFrame, RecoversSubpixelShift) {
  CameraIntrinsics k;
  k.width = 160;
  k.height = 120;
  k.cx = 79.5;
  k.cy = 59.5;
  const RgbdFrame a = shifted_texture(160, 120, 0, 0), b = shifted_texture(160, 120, 2.3, -1.6);
  const auto feats = detect_features(a, k, 50);
  ASSERT_GT(feats.size(), 10u);
  const auto tracked = track_frame(a, b, feats, k);
  int alive = 0;
  for (std::size_t i = 0; i < tracked.size(); ++i) {
    if (!tracked[i].usable()) continue;
    ++alive;
    const Eigen::Vector2d moved = tracked[i].pixel - feats[i].pixel;
    EXPECT_NEAR(moved.x(), -2.3, 0.05);
    EXPECT_NEAR(moved.y(), 1.6, 0.05);
  }
  EXPECT_GT(alive, int(feats.size()) / 2);
}

TEST(Tracker, StaticSequenceGivesIdentity) {
  const auto s = sphere_scene(1, 0.0, true);
  const RgbdFrame f = synth::Renderer(s).render_frame(0);
  Tracker tracker(s.intrinsics, {});
  for (int i = 0; i < 5; ++i) {
    RgbdFrame g = f;
    g.frame_id = i;
    const FramePose p = tracker.process(g);
    ASSERT_TRUE(p.tracked);
    EXPECT_LT(p.pose.translation.norm(), 1e-6);
    EXPECT_LT(p.pose.angle(), 1e-6);
  }
  EXPECT_EQ(tracker.keyframes().size(), 1u);
}

TEST(Tracker, ShortOrbitDriftBelowOnePercent) {
  const auto s = sphere_scene(8, 20.0);
  const synth::Renderer r(s);
  std::size_t i = 0;
  const auto result = track_sequence(
      [&]() -> std::optional<RgbdFrame> {
        if (i >= s.trajectory.size()) return std::nullopt;
        return r.render_frame(i++);
      },
      s.intrinsics);
  ASSERT_FALSE(result.aborted);
  ASSERT_EQ(result.poses.size(), 8u);
  EXPECT_TRUE(result.failed_frames.empty());
  double path = 0;
  for (std::size_t k = 1; k < s.trajectory.size(); ++k) path += translation_distance(s.trajectory[k], s.trajectory[k - 1]);
  const Pose truth = s.trajectory.front().inverse() * s.trajectory.back();
  EXPECT_LT(translation_distance(truth, result.poses.back().pose), 0.01 * path);
  EXPECT_GE(result.keyframes.size(), 2u);
  EXPECT_EQ(result.keyframes.front().pose, Pose::identity());
}

TEST(Tracker, FeaturelessFirstFrameRejected) {
  CameraIntrinsics k;
  RgbdFrame blank(k.width, k.height);
  std::fill(blank.depth.begin(), blank.depth.end(), std::uint16_t(1000));
  std::fill(blank.color.begin(), blank.color.end(), Rgb{90, 90, 90});
  Tracker tracker(k, {});
  EXPECT_THROW(tracker.process(blank), StageError);
}

TEST(Tracker, LostFramesAbortWithPartialResult) {
  const auto s = sphere_scene(3, 10.0);
  const synth::Renderer r(s);
  CameraIntrinsics k = s.intrinsics;
  RgbdFrame blank(k.width, k.height);
  std::fill(blank.color.begin(), blank.color.end(), Rgb{90, 90, 90});
  std::size_t i = 0;
  TrackerConfig cfg;
  cfg.max_consecutive_failures = 2;
  const auto result = track_sequence(
      [&]() -> std::optional<RgbdFrame> {
        if (i >= 10) return std::nullopt;
        if (i < 2) return r.render_frame(i++);
        RgbdFrame b = blank;
        b.frame_id = static_cast<std::int64_t>(i++);
        return b;
      },
      k, cfg);
  EXPECT_TRUE(result.aborted);
  EXPECT_FALSE(result.abort_reason.empty());
  EXPECT_GE(result.failed_frames.size(), 2u);
  EXPECT_FALSE(result.keyframes.empty());
}
