#pragma once

#include "objmodel/geometry.hpp"
#include "objmodel/mesh.hpp"

#include <Eigen/Core>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

namespace objmodel::testing {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("objmodel_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline Pose random_pose(std::mt19937_64& rng, double max_angle, double max_shift) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Vector3d axis(n(rng), n(rng), n(rng));
  axis.normalize();
  return Pose::from_axis_angle(axis, max_angle * u(rng), max_shift * Eigen::Vector3d(u(rng), u(rng), u(rng)));
}

// Points whose normal faces `eye`; for convex shapes this is exactly the visible part.
inline ObjectCloud facing(const ObjectCloud& all, const Eigen::Vector3d& eye) {
  ObjectCloud out;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (all.normals[i].dot(eye - all.points[i]) > 0.05 * (eye - all.points[i]).norm())
      out.push_back(all.points[i], all.normals[i], true, {}, false, 1.0);
  return out;
}

inline ObjectCloud visible_samples(const TriangleMesh& mesh, const Eigen::Vector3d& eye, std::size_t count,
                                   std::uint64_t seed) {
  return facing(sample_mesh(mesh, count, seed), eye);
}

// Samples of a 10 x 8 x 6 cm box with a 2.5 cm spherical knob on its top
// face near one corner: no rotational symmetry. Parts of either surface
// inside the other solid are left out.
inline ObjectCloud knobbed_box_samples(std::size_t count, std::uint64_t seed) {
  const Eigen::Vector3d half(0.05, 0.04, 0.03), knob(0.025, 0.015, 0.03);
  const double r = 0.025;
  ObjectCloud box = sample_mesh(make_box(0.10, 0.08, 0.06), count, seed);
  ObjectCloud ball = sample_mesh(make_sphere(r), count / 3, seed + 1000);
  ObjectCloud out;
  for (std::size_t i = 0; i < box.size(); ++i)
    if ((box.points[i] - knob).norm() > r) out.push_back(box.points[i], box.normals[i], true, {}, false, 1.0);
  for (std::size_t i = 0; i < ball.size(); ++i) {
    const Eigen::Vector3d p = ball.points[i] + knob;
    if ((p.cwiseAbs() - half).maxCoeff() > 0.0) out.push_back(p, ball.normals[i], true, {}, false, 1.0);
  }
  return out;
}

}  // namespace objmodel::testing
