#include "objmodel/error.hpp"
#include "objmodel/segmentation.hpp"
#include "objmodel/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace objmodel;

namespace {

struct Scene {
  synth::SyntheticScene scene;
  RgbdFrame frame;
  synth::CleanRender clean;
};

Scene box_scene() {
  Scene s;
  s.scene.object = synth::place_on_table(make_box(0.10, 0.08, 0.06));
  s.scene.trajectory = synth::orbit(s.scene.object_center(), 1.0, 40.0, 1);
  const synth::Renderer r(s.scene);
  s.frame = r.render_frame(0);
  s.clean = r.render_clean(s.scene.trajectory[0]);
  return s;
}

}  // namespace

TEST(SegmentationConfig, Validation) {
  SegmentationConfig c;
  EXPECT_NO_THROW(c.validate());
  c.background_fraction = 1.5;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.plane_threshold_m = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(RegionOfInterest, Validation) {
  RegionOfInterest r{{0, 0, 0}, {1, 1, 1}};
  EXPECT_NO_THROW(r.validate());
  EXPECT_TRUE(r.contains({0.5, 0.5, 1.0}));
  r.max.z() = 0;
  EXPECT_THROW(r.validate(), InvalidInput);
}

TEST(PlaneModel, Transformed) {
  PlaneModel p;
  p.normal = {0, 0, 1};
  p.offset = -1.0;  // z = 1
  const Pose t = Pose::from_axis_angle(Eigen::Vector3d::UnitX(), 0.5, Eigen::Vector3d(0.1, 0.2, 0.3));
  const PlaneModel q = p.transformed(t);
  EXPECT_NEAR(q.signed_distance(t * Eigen::Vector3d(0.4, -0.3, 1.0)), 0.0, 1e-12);
  EXPECT_NEAR(q.signed_distance(t * Eigen::Vector3d(0, 0, 2.0)), 1.0, 1e-12);
}

TEST(DetectPlanes, FindsTheTable) {
  const Scene s = box_scene();
  ObjectCloud cloud = estimate_normals_organized(depth_to_cloud(s.frame, s.scene.intrinsics));
  const auto planes = detect_planes(cloud, 1);
  ASSERT_EQ(planes.size(), 1u);
  // The table normal in camera coordinates is world +z seen from the camera.
  const Eigen::Vector3d up = s.scene.trajectory[0].rotation.transpose() * Eigen::Vector3d::UnitZ();
  EXPECT_GT(std::abs(planes[0].normal.dot(up)), std::cos(2.0 * M_PI / 180.0));
  std::size_t on_object = 0;
  for (auto i : planes[0].inlier_indices) on_object += s.clean.object_mask[static_cast<std::size_t>(i)];
  EXPECT_LT(on_object, planes[0].inlier_indices.size() / 50);
}

TEST(ObjectHypotheses, BoxIsOneHypothesis) {
  const Scene s = box_scene();
  const auto hyps = object_hypotheses(s.frame, s.scene.intrinsics);
  ASSERT_FALSE(hyps.empty());
  const auto& h = hyps.front();
  EXPECT_EQ(h.hypothesis_id, 0);
  EXPECT_TRUE(std::is_sorted(h.pixel_indices.begin(), h.pixel_indices.end()));
  ASSERT_TRUE(h.support_plane);
  std::size_t on_object = 0, object_total = 0;
  for (auto i : h.pixel_indices) on_object += s.clean.object_mask[static_cast<std::size_t>(i)];
  for (auto m : s.clean.object_mask) object_total += m;
  EXPECT_GT(on_object, h.pixel_indices.size() * 95 / 100);
  EXPECT_GT(on_object, object_total * 85 / 100);
}

TEST(SmoothClusters, SeparatesDistantPatches) {
  ObjectCloud c(40 * 20);
  c.width = 40;
  c.height = 20;
  for (int v = 0; v < 20; ++v)
    for (int u = 0; u < 40; ++u) {
      const auto i = static_cast<std::size_t>(v * 40 + u);
      const double z = u < 20 ? 1.0 : 1.2;
      c.points[i] = {u * 0.002, v * 0.002, z};
      c.normals[i] = {0, 0, -1};
      c.normal_valid[i] = 1;
      c.valid[i] = 1;
    }
  SegmentationConfig cfg;
  cfg.min_cluster_size = 100;
  const auto hyps = smooth_clusters(c, {}, cfg);
  ASSERT_EQ(hyps.size(), 2u);
  EXPECT_EQ(hyps[0].pixel_indices.size(), 400u);
  EXPECT_EQ(hyps[1].hypothesis_id, 1);
  cfg.min_cluster_size = 500;
  EXPECT_TRUE(smooth_clusters(c, {}, cfg).empty());
}

TEST(SegmentByRoi, KeepsObjectDropsTable) {
  Scene s = box_scene();
  std::vector<Keyframe> kfs(1);
  kfs[0].frame = s.frame;
  // Model frame = first camera; the ROI is the box region in world, moved into it.
  const Pose world_to_model = s.scene.trajectory[0].inverse();
  RegionOfInterest world{{-0.07, -0.07, -0.01}, {0.07, 0.07, 0.08}};
  // Axis-aligned box in model coordinates enclosing the world box corners.
  RegionOfInterest roi{Eigen::Vector3d::Constant(1e9), Eigen::Vector3d::Constant(-1e9)};
  for (int c = 0; c < 8; ++c) {
    const Eigen::Vector3d w(c & 1 ? world.max.x() : world.min.x(), c & 2 ? world.max.y() : world.min.y(),
                            c & 4 ? world.max.z() : world.min.z());
    const Eigen::Vector3d m = world_to_model * w;
    roi.min = roi.min.cwiseMin(m);
    roi.max = roi.max.cwiseMax(m);
  }
  segment_by_roi(kfs, roi, s.scene.intrinsics);
  const auto& idx = kfs[0].object_indices;
  ASSERT_FALSE(idx.empty());
  std::size_t on_object = 0;
  for (auto i : idx) on_object += s.clean.object_mask[static_cast<std::size_t>(i)];
  EXPECT_GT(on_object, idx.size() * 95 / 100);

  RegionOfInterest empty{{5, 5, 5}, {6, 6, 6}};
  EXPECT_THROW(segment_by_roi(kfs, empty, s.scene.intrinsics), StageError);
}
