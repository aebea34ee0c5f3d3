#pragma once

#include "objmodel/geometry.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace objmodel {

/// Indexed triangle mesh (meters).
struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;

  std::size_t size() const { return triangles.size(); }
  const Eigen::Vector3d& corner(std::size_t tri, int c) const {
    return vertices[static_cast<std::size_t>(triangles[tri][static_cast<std::size_t>(c)])];
  }
  Eigen::Vector3d face_normal(std::size_t tri) const;  // unit, counter-clockwise winding
  double area(std::size_t tri) const;
  double total_area() const;
  void bounds(Eigen::Vector3d& lo, Eigen::Vector3d& hi) const;
};

TriangleMesh transform_mesh(const TriangleMesh& mesh, const Pose& pose);

// Generators. All meshes are closed, outward-facing and centred on the origin.
TriangleMesh make_sphere(double radius, int subdivisions = 4);
TriangleMesh make_box(double sx, double sy, double sz);
/// Ribbed surface of revolution about z with flat top and bottom caps.
/// `taper` > 0 widens the lower half and narrows the upper one (radius
/// scaled by 1 + taper * (0.5 - height fraction)); rib_depth 0 gives a smooth body.
TriangleMesh make_pumpkin(double radius, double height, int ribs = 10, double rib_depth = 0.08, double taper = 0.0,
                          int slices = 120, int stacks = 40);
/// Sphere with smooth random radial bumps; no symmetry.
TriangleMesh make_potato(double radius, std::uint64_t seed, int bumps = 9, int subdivisions = 4);
/// Square plane patch z = 0 with the given half extent, normal +z.
TriangleMesh make_plane(double half_extent, int cells = 1);

/// Wavefront OBJ subset: "v x y z" and triangular "f a b c" (1-based, optional /vt/vn).
void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh read_obj(const std::filesystem::path& path);

/// Closest point on triangle (a, b, c) to p.
Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b, const Eigen::Vector3d& c);

/// Ray-triangle intersection (Moller-Trumbore). Returns t > tmin or a negative value.
double intersect_triangle(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, const Eigen::Vector3d& a,
                          const Eigen::Vector3d& b, const Eigen::Vector3d& c, double tmin = 1e-9);

/// Bounding volume hierarchy over a mesh for ray casting and exact
/// closest-point queries. The closest-point query returns the same squared
/// distance as a scan over all triangles with closest_point_on_triangle.
class MeshBvh {
 public:
  MeshBvh() = default;
  explicit MeshBvh(TriangleMesh mesh);

  struct RayHit {
    double t = -1.0;
    int triangle = -1;
  };
  struct ClosestHit {
    double sq_distance = std::numeric_limits<double>::infinity();
    int triangle = -1;
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
  };

  RayHit raycast(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double tmax = 1e30) const;
  ClosestHit closest(const Eigen::Vector3d& p) const;
  const TriangleMesh& mesh() const { return mesh_; }

 private:
  struct Node {
    Eigen::Vector3d lo, hi;
    int begin = 0, end = 0;  // into order_ for leaves
    int left = -1, right = -1;
  };
  int build(int begin, int end);
  void closest_rec(int node, const Eigen::Vector3d& p, ClosestHit& best) const;

  TriangleMesh mesh_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Squared distance from p to the mesh by scanning every triangle.
double brute_force_sq_distance(const TriangleMesh& mesh, const Eigen::Vector3d& p);

/// Area-uniform surface samples with outward normals (deterministic in seed).
ObjectCloud sample_mesh(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed);

/// Convex hull as an outward-facing triangle mesh (incremental construction).
/// Vertices are the hull's input points. Throws EstimationError when the
/// points do not span a volume.
TriangleMesh convex_hull(const std::vector<Eigen::Vector3d>& points);

}  // namespace objmodel
