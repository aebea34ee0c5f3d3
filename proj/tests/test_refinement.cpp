#include "objmodel/error.hpp"
#include "objmodel/mesh.hpp"
#include "objmodel/refinement.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace objmodel;
using objmodel::testing::random_pose;
using objmodel::testing::facing;
using objmodel::testing::knobbed_box_samples;

namespace {

constexpr double kDeg = M_PI / 180.0;

// Views of the knobbed box around a circle; cloud in camera coordinates.
std::vector<RefinementView> orbit_views(int count, std::vector<Pose>& truth) {
  std::vector<RefinementView> views;
  truth.clear();
  for (int i = 0; i < count; ++i) {
    const double a = 2.0 * M_PI * i / count;
    const Eigen::Vector3d eye(0.5 * std::cos(a), 0.5 * std::sin(a), 0.2);
    const Eigen::Vector3d z = (-eye).normalized();
    const Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitZ()).normalized();
    Pose cam;
    cam.rotation.col(0) = x;
    cam.rotation.col(1) = z.cross(x);
    cam.rotation.col(2) = z;
    cam.translation = eye;
    truth.push_back(cam);
    RefinementView v;
    v.id = i;
    v.pose = cam;
    v.cloud = transform_cloud(facing(knobbed_box_samples(8000, 10 + static_cast<std::uint64_t>(i)), eye), cam.inverse());
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace

TEST(IcpConfig, GateSchedule) {
  IcpConfig c;
  EXPECT_DOUBLE_EQ(c.gate(0), 0.02);
  EXPECT_NEAR(c.gate(1), 0.014, 1e-15);
  EXPECT_DOUBLE_EQ(c.gate(50), c.gate_floor_m);
  c.gate_factor = 1.5;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.overlap_min = -0.1;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(PairwiseIcp, RecoversSmallMisalignment) {
  const ObjectCloud target = knobbed_box_samples(8000, 1);
  const ObjectCloud source = knobbed_box_samples(8000, 2);
  const Pose error = Pose::from_axis_angle(Eigen::Vector3d(1, 2, 3).normalized(), 4 * kDeg, Eigen::Vector3d(0.004, -0.003, 0.002));
  const auto result = pairwise_icp(source, target, error);
  EXPECT_LT(result.transform.angle(), 0.3 * kDeg);
  EXPECT_LT(result.transform.translation.norm(), 0.0008);
  EXPECT_GT(result.pairs, 100u);
}

TEST(ViewOverlap, SelfAndFar) {
  std::vector<Pose> truth;
  auto views = orbit_views(2, truth);
  EXPECT_DOUBLE_EQ(view_overlap(views[0], views[0], 0.001), 1.0);
  RefinementView far = views[0];
  far.pose.translation.x() += 1.0;
  EXPECT_DOUBLE_EQ(view_overlap(views[0], far, 0.01), 0.0);
}

TEST(ViewGraph, DisconnectedThrows) {
  std::vector<Pose> truth;
  auto views = orbit_views(3, truth);
  views[2].pose.translation.z() += 1.0;
  EXPECT_THROW(build_view_graph(views), StageError);
}

TEST(MultiviewIcp, ReducesInjectedDrift) {
  std::vector<Pose> truth;
  auto views = orbit_views(8, truth);
  std::mt19937_64 rng(4);
  for (std::size_t i = 1; i < views.size(); ++i) views[i].pose = views[i].pose * random_pose(rng, 1.5 * kDeg, 0.002);
  ViewGraph graph = build_view_graph(views);
  EXPECT_GE(graph.edges.size(), 7u);

  // mean displacement of the view points from where the true pose puts them
  auto error = [&](const ViewGraph& g) {
    double e = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
      for (const auto& p : g.nodes[i].cloud.points) {
        e += (g.nodes[i].pose * p - truth[i] * p).norm();
        ++n;
      }
    return e / double(n);
  };
  const double before = error(graph);
  const Pose anchor = graph.nodes[0].pose;
  const IcpResult result = multiview_icp(graph);
  EXPECT_EQ(graph.nodes[0].pose, anchor);
  EXPECT_LT(error(graph), 0.3 * before);
  ASSERT_FALSE(result.log.empty());
  EXPECT_LT(result.log.back().rms_after, result.log.front().rms_before);
  EXPECT_EQ(result.poses.size(), graph.nodes.size());
}
