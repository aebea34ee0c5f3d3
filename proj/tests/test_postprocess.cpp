#include "objmodel/error.hpp"
#include "objmodel/postprocess.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace objmodel;

// Reference values of the weight formula.
TEST(NoiseWeight, ReferenceValues) {
  const NoiseModelParams p;  // theta_max 60 deg, sigma_L 2 mm
  EXPECT_NEAR(noise_weight(90.0, 0.01, p), 0.0, 1e-4);
  EXPECT_NEAR(noise_weight(30.0, 0.0, p), 0.5, 1e-4);
  EXPECT_NEAR(noise_weight(75.0, p.sigma_lateral, p), 0.4080, 1e-4);
  EXPECT_NEAR(noise_weight(0.0, 1.0, p), 1.0, 1e-12);
}

TEST(NoiseWeight, MonotoneOnGrid) {
  const NoiseModelParams p;
  for (int i = 0; i < 100; ++i) {
    const double theta = 90.0 * i / 99.0;
    for (int j = 0; j < 100; ++j) {
      const double d = 0.01 * j / 99.0;
      const double w = noise_weight(theta, d, p);
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
      if (i > 0) EXPECT_LE(w, noise_weight(90.0 * (i - 1) / 99.0, d, p));
      if (j > 0) EXPECT_GE(w, noise_weight(theta, 0.01 * (j - 1) / 99.0, p));
    }
  }
}

TEST(NoiseWeight, ParametersValidated) {
  NoiseModelParams p;
  p.sigma_lateral = 0.0;
  EXPECT_THROW(p.validate(), InvalidInput);
  p = {};
  p.theta_max_deg = 95.0;
  EXPECT_THROW(p.validate(), InvalidInput);
}

TEST(ViewAngle, FacingAndGrazing) {
  EXPECT_NEAR(view_angle_deg({0, 0, 1}, {0, 0, -1}), 0.0, 1e-9);
  EXPECT_NEAR(view_angle_deg({0, 0, 1}, {1, 0, 0}), 90.0, 1e-9);
}

namespace {

// Organized 20x20 plane at z = 1 facing the sensor, right half pushed back.
ObjectCloud step_cloud(double jump) {
  ObjectCloud c(400);
  c.width = c.height = 20;
  for (int v = 0; v < 20; ++v)
    for (int u = 0; u < 20; ++u) {
      const auto i = static_cast<std::size_t>(v * 20 + u);
      const double z = u < 10 ? 1.0 : 1.0 + jump;
      c.points[i] = {(u - 9.5) * 0.002 * z, (v - 9.5) * 0.002 * z, z};
      c.normals[i] = {0, 0, -1};
      c.normal_valid[i] = 1;
      c.valid[i] = 1;
      c.pixel[i] = int(i);
    }
  return c;
}

std::vector<Eigen::Vector3d> sorted_points(const ObjectCloud& c) {
  auto p = c.valid_points();
  std::sort(p.begin(), p.end(), [](const auto& a, const auto& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  });
  return p;
}

// Plane z = 1 facing the camera at the origin, moved `toward` the camera.
WeightedView plane_view(std::int64_t id, double toward, double weight, double shift) {
  WeightedView v;
  v.id = id;
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 15; ++j)
      v.cloud.push_back({i * 0.004 + shift, j * 0.004 + shift, 1.0 - toward}, {0, 0, -1}, true, {}, false, weight);
  return v;
}

}  // namespace

TEST(DepthEdges, JumpAndBorder) {
  const NoiseModelParams p;
  const ObjectCloud flagged = flag_depth_edges(step_cloud(0.05), p);
  EXPECT_TRUE(flagged.edge_flags[5 * 20 + 9]);
  EXPECT_TRUE(flagged.edge_flags[5 * 20 + 10]);
  EXPECT_FALSE(flagged.edge_flags[5 * 20 + 5]);
  EXPECT_TRUE(flagged.edge_flags[0]);  // image border
  const ObjectCloud smooth = flag_depth_edges(step_cloud(0.001), p);
  EXPECT_FALSE(smooth.edge_flags[5 * 20 + 9]);
}

TEST(ComputeWeights, EdgeProximityAndInvalidNormals) {
  const NoiseModelParams p;
  ObjectCloud c = flag_depth_edges(step_cloud(0.05), p);
  c.normal_valid[8 * 20 + 4] = 0;
  const ObjectCloud w = compute_weights(c, p);
  EXPECT_NEAR(w.weights[8 * 20 + 9], 0.5, 1e-9);  // on the edge
  EXPECT_GT(w.weights[8 * 20 + 5], w.weights[8 * 20 + 8]);
  EXPECT_EQ(w.weights[8 * 20 + 4], 0.0);
  w.check_invariants();
}

TEST(Fusion, CoincidentViewsCollapse) {
  const std::vector<WeightedView> views = {plane_view(0, 0.0, 1.0, 0.0), plane_view(1, 0.0, 1.0, 0.0)};
  FusionStats stats;
  const ObjectCloud fused = fuse_observations(views, {}, {}, &stats);
  EXPECT_EQ(stats.observations, 450u);
  EXPECT_EQ(fused.size(), 225u);
  for (const auto& p : fused.points) EXPECT_NEAR(p.z(), 1.0, 1e-12);
  fused.check_invariants();
}

TEST(Fusion, WeightedAverageAlongNormal) {
  const std::vector<WeightedView> views = {plane_view(0, 0.0, 1.0, 0.0), plane_view(1, 0.003, 0.5, 0.0)};
  const ObjectCloud fused = fuse_observations(views);
  ASSERT_EQ(fused.size(), 225u);
  for (std::size_t i = 0; i < fused.size(); ++i) {
    EXPECT_NEAR(fused.points[i].z(), 0.999, 1e-9);
    EXPECT_DOUBLE_EQ(fused.weights[i], 1.0);
  }
  FusionConfig plain;
  plain.use_weights = false;
  for (const auto& p : fuse_observations(views, plain).points) EXPECT_NEAR(p.z(), 0.9985, 1e-9);
}

TEST(Fusion, IndependentOfViewOrder) {
  std::vector<WeightedView> views = {plane_view(0, 0.0, 1.0, 0.0), plane_view(1, 0.001, 0.7, 0.0013),
                                     plane_view(2, -0.001, 0.9, 0.0021)};
  const auto a = sorted_points(fuse_observations(views));
  std::reverse(views.begin(), views.end());
  const auto b = sorted_points(fuse_observations(views));
  std::swap(views[0], views[1]);
  const auto c = sorted_points(fuse_observations(views));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Fusion, LightGroupsDroppedOrKept) {
  const std::vector<WeightedView> views = {plane_view(0, 0.0, 0.3, 0.0)};
  FusionStats stats;
  EXPECT_TRUE(fuse_observations(views, {}, {}, &stats).empty());
  EXPECT_EQ(stats.dropped_light, 225u);
  FusionConfig keep;
  keep.keep_light_groups = true;
  EXPECT_EQ(fuse_observations(views, keep).size(), 225u);
}

TEST(Fusion, ObservationInFrontOfSurfaceRemoved) {
  std::vector<WeightedView> views = {plane_view(0, 0.0, 1.0, 0.0), plane_view(1, 0.0, 1.0, 0.0),
                                     plane_view(2, 0.0, 1.0, 0.0)};
  WeightedView stray;
  stray.id = 3;
  stray.cloud.push_back({0.02, 0.02, 0.99}, {0, 0, -1}, true, {}, false, 0.9);
  views.push_back(stray);
  FusionStats stats;
  const ObjectCloud fused = fuse_observations(views, {}, {}, &stats);
  EXPECT_EQ(stats.removed_inconsistent, 1u);
  for (const auto& p : fused.points) EXPECT_GT(p.z(), 0.995);
}

TEST(Fusion, GrazingObservationsDropped) {
  // Seen edge-on: point straight ahead, normal sideways.
  WeightedView side;
  side.id = 1;
  side.cloud.push_back({0, 0, 1}, {1, 0, 0}, true, {}, false, 1.0);
  FusionStats stats;
  fuse_observations({side}, {}, {}, &stats);
  EXPECT_EQ(stats.dropped_grazing, 1u);
}

TEST(Fusion, ConfigValidated) {
  FusionConfig c;
  c.radius = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.normal_tolerance = -1;
  EXPECT_THROW(c.validate(), InvalidInput);
}
