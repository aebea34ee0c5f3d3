#include "objmodel/error.hpp"
#include "objmodel/mesh.hpp"
#include "objmodel/multisession.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <bit>
#include <fstream>
#include <numeric>

using namespace objmodel;
using objmodel::testing::random_pose;
using objmodel::testing::TempDir;
using objmodel::testing::visible_samples;

namespace {

constexpr double kDeg = M_PI / 180.0;

RegistrationCandidate edge(int s, int t, double q, const Pose& transform = {}) {
  RegistrationCandidate c;
  c.source_session = s;
  c.target_session = t;
  c.quality = q;
  c.transform = transform;
  return c;
}

// Best total quality over all spanning trees, by enumerating edge subsets.
double brute_force_best(int n, const std::vector<RegistrationCandidate>& edges) {
  double best = -1;
  const std::size_t m = edges.size();
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    if (std::popcount(mask) != n - 1) continue;
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
      while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
      return x;
    };
    bool tree = true;
    double total = 0;
    for (std::size_t e = 0; e < m && tree; ++e) {
      if (!(mask >> e & 1u)) continue;
      if (edges[e].quality <= 0) tree = false;
      const int a = find(edges[e].source_session), b = find(edges[e].target_session);
      if (a == b) tree = false;
      parent[static_cast<std::size_t>(a)] = b;
      total += edges[e].quality;
    }
    if (tree) best = std::max(best, total);
  }
  return best;
}

}  // namespace

TEST(MultisessionConfig, Validation) {
  MultisessionConfig c;
  EXPECT_NO_THROW(c.validate());
  c.overlap_floor = 1.5;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.min_consensus = 2;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(Fsv, ZeroForIdenticalClouds) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const ObjectCloud c = sample_mesh(make_potato(0.05, rng()), 2000, rng());
    EXPECT_EQ(fsv_ratio(c, c, Pose::identity()), 0.0);
  }
}

TEST(Fsv, InterpenetrationScoresBelowConsistentAlignment) {
  const TriangleMesh box = make_box(0.10, 0.08, 0.06);
  const ObjectCloud top = visible_samples(box, {0.3, 0.2, 0.5}, 8000, 1);
  const ObjectCloud side = visible_samples(box, {-0.3, -0.4, 0.1}, 8000, 2);
  const Pose pushed = Pose::from_axis_angle(Eigen::Vector3d::UnitZ(), 0.0, Eigen::Vector3d(0.02, 0.0, -0.015));
  const auto good = score_alignment(edge(0, 1, 0, Pose::identity()), top, side);
  const auto bad = score_alignment(edge(0, 1, 0, pushed), top, side);
  EXPECT_LT(good.fsv_ratio, 0.05);
  EXPECT_GT(bad.fsv_ratio, good.fsv_ratio);
  EXPECT_GT(good.quality, bad.quality);
  EXPECT_GT(good.overlap_ratio, 0.25);
}

TEST(Fsv, NoSurfaceContactIsInfinite) {
  const ObjectCloud c = sample_mesh(make_sphere(0.05), 500, 1);
  const Pose far = Pose::from_axis_angle(Eigen::Vector3d::UnitZ(), 0.0, Eigen::Vector3d(1, 0, 0));
  EXPECT_TRUE(std::isinf(fsv_ratio(c, c, far)));
  EXPECT_EQ(overlap_ratio(c, c, far), 0.0);
}

TEST(CandidateQuality, Formula) {
  const MultisessionConfig c;
  EXPECT_NEAR(candidate_quality(0.05, 0.8, c), 0.8 * std::exp(-1.0), 1e-12);
  EXPECT_EQ(candidate_quality(0.0, 0.2, c), 0.0);
  EXPECT_EQ(candidate_quality(std::numeric_limits<double>::infinity(), 0.9, c), 0.0);
}

TEST(MaximumSpanningTree, MatchesEnumeration) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> q(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 4;
    std::vector<RegistrationCandidate> edges;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (q(rng) < 0.8) edges.push_back(edge(a, b, q(rng) < 0.1 ? 0.0 : std::round(q(rng) * 10) / 10));
    const auto tree = maximum_spanning_tree(n, edges);
    const double best = brute_force_best(n, edges);
    if (best < 0) {
      EXPECT_LT(tree.size(), std::size_t(n - 1));
      continue;
    }
    ASSERT_EQ(tree.size(), std::size_t(n - 1));
    double total = 0;
    for (auto e : tree) total += edges[e].quality;
    EXPECT_NEAR(total, best, 1e-12);
  }
}

TEST(TreePoses, ComposesInBothDirections) {
  std::mt19937_64 rng(3);
  const Pose p1 = random_pose(rng, 1.0, 0.1), p2 = random_pose(rng, 1.0, 0.1), p3 = random_pose(rng, 1.0, 0.1);
  // Session k -> session 0 is pk. Edges map source into target.
  const std::vector<RegistrationCandidate> edges = {
      edge(1, 0, 1, p1),                  // 1 -> 0
      edge(1, 2, 1, p2.inverse() * p1),   // 1 -> 2
      edge(3, 2, 1, p2.inverse() * p3),   // 3 -> 2
  };
  const auto poses = tree_poses(4, edges, {0, 1, 2});
  ASSERT_EQ(poses.size(), 4u);
  EXPECT_EQ(poses[0], Pose::identity());
  for (const auto& [k, truth] : {std::pair{1, p1}, std::pair{2, p2}, std::pair{3, p3}}) {
    EXPECT_LT(rotation_distance(poses[static_cast<std::size_t>(k)], truth), 1e-12);
    EXPECT_LT(translation_distance(poses[static_cast<std::size_t>(k)], truth), 1e-12);
  }
}

TEST(StablePlanes, BoxHasSixFaces) {
  const ObjectCloud c = sample_mesh(make_box(0.10, 0.08, 0.06), 20000, 1);
  const auto planes = stable_planes(c);
  ASSERT_EQ(planes.size(), 6u);
  EXPECT_NEAR(planes[0].area, 0.10 * 0.08, 0.0008);
  EXPECT_NEAR(planes[5].area, 0.08 * 0.06, 0.0008);
  for (const auto& p : planes) EXPECT_NEAR(p.normal.cwiseAbs().maxCoeff(), 1.0, 1e-3);
}

TEST(StablePlanes, SphereHasNone) {
  EXPECT_TRUE(stable_planes(sample_mesh(make_sphere(0.06), 5000, 1)).empty());
}

TEST(StablePlaneCandidates, ContainTheTrueAlignment) {
  const TriangleMesh box = make_box(0.10, 0.08, 0.06);
  const ObjectCloud a = sample_mesh(box, 10000, 1);
  const Pose truth = Pose::from_axis_angle(Eigen::Vector3d::UnitZ(), 60 * kDeg, Eigen::Vector3d(0.3, 0.1, 0));
  const ObjectCloud b = transform_cloud(sample_mesh(box, 10000, 2), truth);
  const auto cands = candidates_from_stable_planes(a, b);
  ASSERT_FALSE(cands.empty());
  double best = 1e9;
  for (const auto& c : cands) best = std::min(best, translation_distance(c.transform, truth) + rotation_distance(c.transform, truth));
  EXPECT_LT(best, 0.01);
  for (const auto& c : cands) EXPECT_EQ(c.origin, CandidateOrigin::stable_plane);
}

TEST(FeatureCandidates, RecoverAsymmetricObject) {
  const ObjectCloud a = objmodel::testing::knobbed_box_samples(10000, 1);
  const Pose truth = Pose::from_axis_angle(Eigen::Vector3d(0, 0.3, 1).normalized(), 40 * kDeg, Eigen::Vector3d(0.05, 0.2, 0));
  const ObjectCloud b = transform_cloud(objmodel::testing::knobbed_box_samples(10000, 2), truth);
  const auto best = best_candidate(a, b, {}, true, false);
  EXPECT_GT(best.quality, 0.0);
  EXPECT_LT(rotation_distance(best.transform, truth), 2 * kDeg);
  EXPECT_LT(translation_distance(best.transform, truth), 0.003);
}

TEST(MergeSessions, RejectsSingleSession) {
  EXPECT_THROW(merge_sessions({sample_mesh(make_sphere(0.05), 100, 1)}), InvalidInput);
}

TEST(MergeSessions, DisconnectedGraphIsStageError) {
  MultisessionConfig cfg;
  cfg.overlap_floor = 1.0;  // nothing can reach it with different sizes
  const ObjectCloud small = sample_mesh(make_sphere(0.04), 3000, 1);
  const ObjectCloud large = sample_mesh(make_sphere(0.08), 3000, 2);
  try {
    merge_sessions({small, large}, cfg);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_NE(std::string(e.what()).find("disconnected"), std::string::npos);
  }
}

TEST(MergeSessions, OrderDoesNotChangeRelativePoses) {
  const TriangleMesh box = make_box(0.10, 0.08, 0.06);
  std::mt19937_64 rng(9);
  std::vector<ObjectCloud> s;
  std::vector<Pose> placement;
  const Eigen::Vector3d eyes[] = {{0.3, 0.2, 0.4}, {-0.3, 0.2, -0.4}, {0.1, -0.4, 0.2}};
  for (int i = 0; i < 3; ++i) {
    placement.push_back(i == 0 ? Pose::identity() : random_pose(rng, M_PI, 0.1));
    s.push_back(transform_cloud(visible_samples(box, eyes[i], 6000, 20 + static_cast<std::uint64_t>(i)), placement.back()));
  }
  const MergeResult forward = merge_sessions(s);
  const MergeResult shuffled = merge_sessions({s[2], s[0], s[1]});
  // Pose of session 1 in session 2's frame, from both runs.
  const Pose a = forward.poses[2].inverse() * forward.poses[1];
  const Pose b = shuffled.poses[0].inverse() * shuffled.poses[2];
  EXPECT_LT(rotation_distance(a, b), 1e-6);
  EXPECT_LT(translation_distance(a, b), 1e-6);
  EXPECT_EQ(forward.model.size(), s[0].size() + s[1].size() + s[2].size());

  TempDir dir("merge");
  write_merge_report(forward, dir / "report.txt");
  std::ifstream in(dir / "report.txt");
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, "# sessions 3");
}
