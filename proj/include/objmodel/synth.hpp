#pragma once

#include "objmodel/frame.hpp"
#include "objmodel/geometry.hpp"
#include "objmodel/io.hpp"
#include "objmodel/mesh.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace objmodel::synth {

struct NoiseParams {
  double sigma_base = 0.0015;    // axial sigma at 1 m; grows with (z / 1 m)^2
  double sigma_lateral = 0.002;  // edge jitter (meters, converted to pixels per depth)
  double color_sigma = 1.0;      // intensity noise per channel
  double edge_jump = 0.02;       // depth difference that defines an edge pixel
};

/// Mesh object resting on a textured table plane z = 0 (world frame), seen
/// along a list of camera-to-world poses.
struct SyntheticScene {
  TriangleMesh object;
  double table_half_extent = 1.0;
  std::uint32_t texture_seed = 7;
  Rgb object_color{200, 120, 60};
  std::vector<Pose> trajectory;  // camera-to-world
  CameraIntrinsics intrinsics;
  NoiseParams noise;
  std::uint64_t seed = 1;
  bool noiseless = false;

  /// Throws InvalidInput when a pose does not see the object's centre.
  void validate() const;
  Eigen::Vector3d object_center() const;
};

/// Rotate an object mesh, then translate it so it rests on z = 0 centred on the z axis.
TriangleMesh place_on_table(const TriangleMesh& mesh, const Pose& orientation = Pose::identity());
/// The object-to-world transform place_on_table applies.
Pose table_placement(const TriangleMesh& mesh, const Pose& orientation = Pose::identity());

/// Camera-to-world pose at `radius` from `target`, azimuth/elevation in
/// degrees, looking at the target with world +z up.
Pose look_at_pose(const Eigen::Vector3d& target, double radius, double azimuth_deg, double elevation_deg);

/// `count` poses evenly spread over `arc_deg` of azimuth starting at `start_deg`.
std::vector<Pose> orbit(const Eigen::Vector3d& target, double radius, double elevation_deg, int count,
                        double arc_deg = 360.0, double start_deg = 0.0);

/// Procedural table texture intensity at world (x, y).
double table_texture(double x, double y, std::uint32_t seed);

/// Noise-free render: depth in meters (0 = nothing hit), colour, and a mask of
/// object pixels.
struct CleanRender {
  int width = 0, height = 0;
  std::vector<double> depth;
  std::vector<Rgb> color;
  std::vector<std::uint8_t> object_mask;
};

class Renderer {
 public:
  explicit Renderer(const SyntheticScene& scene);
  CleanRender render_clean(const Pose& camera_to_world) const;
  /// Sensor frame for trajectory entry `index`: noise (unless the scene is
  /// noiseless) drawn from a generator seeded by (scene seed, index).
  RgbdFrame render_frame(std::size_t index) const;
  RgbdFrame render_frame(const Pose& camera_to_world, std::int64_t frame_id, std::uint64_t noise_seed) const;
  const SyntheticScene& scene() const { return scene_; }

 private:
  SyntheticScene scene_;
  MeshBvh bvh_;
};

/// Render every trajectory pose to `out_dir` (manifest.txt, color/, depth/,
/// groundtruth.txt with camera-to-world poses, mesh.obj). Returns the manifest path.
std::filesystem::path render_sequence(const SyntheticScene& scene, const std::filesystem::path& out_dir);

/// Quantize a metric depth to sensor units (0 for invalid / out of range).
std::uint16_t quantize_depth(double z, double depth_scale);

/// Scene description file, "key = value" lines:
///   object = sphere|box|pumpkin|potato|mesh, mesh = file.obj,
///   sphere.radius, box.size (3 values), pumpkin.radius/.height/.ribs/.rib_depth/.taper,
///   potato.radius/.seed, object.rotation_deg (3 values, xyz),
///   orbit.radius/.elevation_deg/.count/.arc_deg/.start_deg,
///   noise.sigma_base/.sigma_lateral/.color_sigma, noiseless,
///   camera.width/.height/.fx/.fy/.cx/.cy, texture, seed
SyntheticScene load_scene(const std::filesystem::path& path);
SyntheticScene scene_from_config(const std::map<std::string, std::string>& kv, const std::filesystem::path& base);

// ---------------------------------------------------------------------------
// Accuracy evaluation

struct AccuracyReport {
  double mean_mm = 0.0;
  double sigma_mm = 0.0;
  double max_mm = 0.0;
  double bin_width_mm = 0.5;
  std::vector<std::size_t> histogram;  // last bin collects everything beyond
  std::size_t count = 0;
};

/// Closest distance from every (registered) cloud point to the mesh.
AccuracyReport evaluate_against_mesh(const ObjectCloud& cloud, const TriangleMesh& mesh,
                                     const Pose& registration = Pose::identity(), double bin_width_mm = 0.5,
                                     int bins = 20);

/// Distances (meters) used by evaluate_against_mesh, one per valid point.
std::vector<double> mesh_distances(const ObjectCloud& cloud, const MeshBvh& bvh, const Pose& registration);

/// "mean_mm sigma_mm max_mm" line followed by one "lo_mm hi_mm count" line per bin.
void write_report(const AccuracyReport& report, const std::filesystem::path& path);
AccuracyReport read_report(const std::filesystem::path& path);

}  // namespace objmodel::synth
