#include "objmodel/error.hpp"
#include "objmodel/mesh.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace objmodel;

namespace {

double signed_volume(const TriangleMesh& m) {
  double v = 0;
  for (std::size_t t = 0; t < m.size(); ++t) v += m.corner(t, 0).dot(m.corner(t, 1).cross(m.corner(t, 2))) / 6.0;
  return v;
}

}  // namespace

TEST(ClosestPointOnTriangle, Regions) {
  const Eigen::Vector3d a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  EXPECT_LT((closest_point_on_triangle({0.2, 0.2, 1}, a, b, c) - Eigen::Vector3d(0.2, 0.2, 0)).norm(), 1e-12);
  EXPECT_LT((closest_point_on_triangle({-1, -1, 0}, a, b, c) - a).norm(), 1e-12);
  EXPECT_LT((closest_point_on_triangle({2, -1, 0}, a, b, c) - b).norm(), 1e-12);
  EXPECT_LT((closest_point_on_triangle({0.5, -1, 0}, a, b, c) - Eigen::Vector3d(0.5, 0, 0)).norm(), 1e-12);
  EXPECT_LT((closest_point_on_triangle({1, 1, 0}, a, b, c) - Eigen::Vector3d(0.5, 0.5, 0)).norm(), 1e-12);
}

TEST(IntersectTriangle, HitAndMiss) {
  const Eigen::Vector3d a(0, 0, 1), b(1, 0, 1), c(0, 1, 1);
  EXPECT_NEAR(intersect_triangle({0.2, 0.2, 0}, {0, 0, 1}, a, b, c), 1.0, 1e-12);
  EXPECT_LT(intersect_triangle({0.8, 0.8, 0}, {0, 0, 1}, a, b, c), 0.0);
  EXPECT_LT(intersect_triangle({0.2, 0.2, 2}, {0, 0, 1}, a, b, c), 0.0);
}

TEST(Generators, ClosedAndOutward) {
  for (const auto& m : {make_sphere(0.06), make_box(0.1, 0.08, 0.06), make_pumpkin(0.07, 0.09),
                        make_pumpkin(0.07, 0.09, 0, 0.0, 0.3), make_potato(0.05, 4)}) {
    EXPECT_GT(signed_volume(m), 0.0);
  }
  EXPECT_NEAR(signed_volume(make_box(0.1, 0.08, 0.06)), 0.1 * 0.08 * 0.06, 1e-12);
  EXPECT_NEAR(signed_volume(make_sphere(0.06)), 4.0 / 3.0 * std::numbers::pi * 0.06 * 0.06 * 0.06, 2e-5);
  EXPECT_THROW(make_pumpkin(-1, 0.1), InvalidInput);
}

TEST(MeshBvh, ClosestMatchesAllTriangleScan) {
  const TriangleMesh mesh = make_potato(0.06, 9);
  const MeshBvh bvh(mesh);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.12, 0.12);
  for (int i = 0; i < 500; ++i) {
    const Eigen::Vector3d p(u(rng), u(rng), u(rng));
    EXPECT_EQ(bvh.closest(p).sq_distance, brute_force_sq_distance(mesh, p));
  }
}

TEST(MeshBvh, Raycast) {
  const MeshBvh bvh(make_box(0.2, 0.2, 0.2));
  const auto hit = bvh.raycast({0, 0, -1}, {0, 0, 1});
  ASSERT_GE(hit.triangle, 0);
  EXPECT_NEAR(hit.t, 0.9, 1e-12);
  EXPECT_LT(bvh.raycast({0, 0, -1}, {0, 1, 0}).triangle, 0);
}

TEST(SampleMesh, PointsOnSurface) {
  const TriangleMesh mesh = make_sphere(0.05);
  const MeshBvh bvh(mesh);
  const ObjectCloud s = sample_mesh(mesh, 1000, 3);
  ASSERT_EQ(s.size(), 1000u);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_LT(bvh.closest(s.points[i]).sq_distance, 1e-20);
    EXPECT_GT(s.normals[i].dot(s.points[i]), 0.0);
  }
  const ObjectCloud again = sample_mesh(mesh, 1000, 3);
  EXPECT_EQ(again.points, s.points);
}

TEST(ConvexHull, CubeWithInteriorPoints) {
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 8; ++i) pts.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int i = 0; i < 200; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  const TriangleMesh hull = convex_hull(pts);
  EXPECT_NEAR(hull.total_area(), 6.0, 1e-9);
  EXPECT_NEAR(signed_volume(hull), 1.0, 1e-9);
  for (std::size_t t = 0; t < hull.size(); ++t)
    for (int c = 0; c < 3; ++c) EXPECT_LT(hull.triangles[t][static_cast<std::size_t>(c)], 8);
}

TEST(ConvexHull, ContainsEveryPoint) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 500; ++i) pts.emplace_back(n(rng), n(rng), n(rng));
  const TriangleMesh hull = convex_hull(pts);
  for (std::size_t t = 0; t < hull.size(); ++t) {
    const Eigen::Vector3d nrm = hull.face_normal(t);
    for (const auto& p : pts) EXPECT_LE(nrm.dot(p - hull.corner(t, 0)), 1e-9);
  }
}

TEST(ConvexHull, DegenerateThrows) {
  EXPECT_THROW(convex_hull({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}), EstimationError);
  EXPECT_THROW(convex_hull({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, 3, 0}}), EstimationError);
  EXPECT_THROW(convex_hull({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}}), EstimationError);
}

TEST(Obj, RoundTrip) {
  objmodel::testing::TempDir dir("obj");
  const TriangleMesh m = make_box(0.1, 0.2, 0.3);
  write_obj(m, dir / "m.obj");
  const TriangleMesh r = read_obj(dir / "m.obj");
  EXPECT_EQ(r.triangles, m.triangles);
  ASSERT_EQ(r.vertices.size(), m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(r.vertices[i], m.vertices[i]);
  EXPECT_THROW(read_obj(dir / "missing.obj"), IoError);
}
