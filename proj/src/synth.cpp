#include "objmodel/synth.hpp"

#include "objmodel/error.hpp"
#include "objmodel/keyvalue.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace objmodel::synth {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double hash01(std::int64_t ix, std::int64_t iy, std::uint32_t seed) {
  std::uint64_t h = static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint64_t>(iy) * 0xC2B2AE3D27D4EB4FULL ^
                    (static_cast<std::uint64_t>(seed) + 0x165667B19E3779F9ULL);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double value_noise(double x, double y, double cell, std::uint32_t seed) {
  const double fx = x / cell, fy = y / cell;
  const auto ix = static_cast<std::int64_t>(std::floor(fx));
  const auto iy = static_cast<std::int64_t>(std::floor(fy));
  const double tx = fx - ix, ty = fy - iy;
  const double sx = tx * tx * (3 - 2 * tx), sy = ty * ty * (3 - 2 * ty);
  const double a = hash01(ix, iy, seed), b = hash01(ix + 1, iy, seed);
  const double c = hash01(ix, iy + 1, seed), d = hash01(ix + 1, iy + 1, seed);
  return (a + sx * (b - a)) + sy * ((c + sx * (d - c)) - (a + sx * (b - a)));
}

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

double table_texture(double x, double y, std::uint32_t seed) {
  const double v = 0.5 * value_noise(x, y, 0.006, seed) + 0.33 * value_noise(x, y, 0.015, seed + 1) +
                   0.17 * value_noise(x, y, 0.04, seed + 2);
  return std::clamp(0.5 + 2.2 * (v - 0.5), 0.0, 1.0);
}

void SyntheticScene::validate() const {
  intrinsics.validate();
  if (object.triangles.empty()) throw InvalidInput("scene: empty object mesh");
  if (trajectory.empty()) throw InvalidInput("scene: empty trajectory");
  const Eigen::Vector3d c = object_center();
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    if (!trajectory[i].is_valid(1e-6)) throw InvalidInput("scene: pose " + std::to_string(i) + " is not rigid");
    Eigen::Vector2d uv;
    const bool ok = project(intrinsics, trajectory[i].inverse() * c, uv);
    if (!ok || uv.x() < 0 || uv.y() < 0 || uv.x() > intrinsics.width - 1 || uv.y() > intrinsics.height - 1)
      throw InvalidInput("scene: pose " + std::to_string(i) + " does not view the object");
  }
  if (noise.sigma_base < 0 || noise.sigma_lateral < 0 || noise.color_sigma < 0)
    throw InvalidInput("scene: negative noise parameter");
}

Eigen::Vector3d SyntheticScene::object_center() const {
  Eigen::Vector3d lo, hi;
  object.bounds(lo, hi);
  return 0.5 * (lo + hi);
}

Pose table_placement(const TriangleMesh& mesh, const Pose& orientation) {
  const TriangleMesh m = transform_mesh(mesh, orientation);
  Eigen::Vector3d lo, hi;
  m.bounds(lo, hi);
  Pose p = orientation;
  p.translation += Eigen::Vector3d(-0.5 * (lo.x() + hi.x()), -0.5 * (lo.y() + hi.y()), -lo.z());
  return p;
}

TriangleMesh place_on_table(const TriangleMesh& mesh, const Pose& orientation) {
  return transform_mesh(mesh, table_placement(mesh, orientation));
}

Pose look_at_pose(const Eigen::Vector3d& target, double radius, double azimuth_deg, double elevation_deg) {
  const double az = azimuth_deg * kDeg, el = elevation_deg * kDeg;
  const Eigen::Vector3d eye = target + radius * Eigen::Vector3d(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
  const Eigen::Vector3d f = (target - eye).normalized();
  const Eigen::Vector3d r = f.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d d = f.cross(r);
  Pose p;
  p.rotation.col(0) = r;
  p.rotation.col(1) = d;
  p.rotation.col(2) = f;
  p.translation = eye;
  return p;
}

std::vector<Pose> orbit(const Eigen::Vector3d& target, double radius, double elevation_deg, int count, double arc_deg,
                        double start_deg) {
  std::vector<Pose> out;
  const bool closed = std::abs(arc_deg - 360.0) < 1e-9;
  for (int i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(i) / (closed ? count : count - 1);
    out.push_back(look_at_pose(target, radius, start_deg + frac * arc_deg, elevation_deg));
  }
  return out;
}

std::uint16_t quantize_depth(double z, double depth_scale) {
  if (!(z > 0.0) || !std::isfinite(z)) return 0;
  const double q = std::round(z / depth_scale);
  if (q < 1.0 || q > 65535.0) return 0;
  return static_cast<std::uint16_t>(q);
}

// ---------------------------------------------------------------------------

Renderer::Renderer(const SyntheticScene& scene) : scene_(scene), bvh_(scene.object) { scene_.validate(); }

CleanRender Renderer::render_clean(const Pose& cam) const {
  const auto& k = scene_.intrinsics;
  CleanRender out;
  out.width = k.width;
  out.height = k.height;
  const std::size_t n = static_cast<std::size_t>(k.width) * k.height;
  out.depth.assign(n, 0.0);
  out.color.assign(n, Rgb{});
  out.object_mask.assign(n, 0);
  const Eigen::Vector3d light = Eigen::Vector3d(0.3, -0.5, 1.0).normalized();
  const Eigen::Vector3d o = cam.translation;
#pragma omp parallel for schedule(dynamic, 4)
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const auto i = static_cast<std::size_t>(v) * k.width + u;
      // direction with unit camera-z component: hit parameter t equals depth
      const Eigen::Vector3d d = cam.rotation * Eigen::Vector3d((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      double t_plane = -1.0;
      if (d.z() < 0.0 && o.z() > 0.0) {
        const double t = -o.z() / d.z();
        const Eigen::Vector3d hit = o + t * d;
        if (std::abs(hit.x()) <= scene_.table_half_extent && std::abs(hit.y()) <= scene_.table_half_extent) t_plane = t;
      }
      const auto obj = bvh_.raycast(o, d, t_plane > 0.0 ? t_plane : 1e30);
      if (obj.triangle >= 0) {
        out.depth[i] = obj.t;
        out.object_mask[i] = 1;
        const Eigen::Vector3d nrm = scene_.object.face_normal(static_cast<std::size_t>(obj.triangle));
        const double shade = 0.35 + 0.65 * std::abs(nrm.dot(light));
        const Rgb& c = scene_.object_color;
        out.color[i] = Rgb{to_u8(c.r * shade), to_u8(c.g * shade), to_u8(c.b * shade)};
      } else if (t_plane > 0.0) {
        out.depth[i] = t_plane;
        const Eigen::Vector3d hit = o + t_plane * d;
        const double tex = table_texture(hit.x(), hit.y(), scene_.texture_seed);
        out.color[i] = Rgb{to_u8(20 + 215 * tex), to_u8(25 + 205 * tex), to_u8(30 + 190 * tex)};
      }
    }
  }
  return out;
}

RgbdFrame Renderer::render_frame(std::size_t index) const {
  return render_frame(scene_.trajectory.at(index), static_cast<std::int64_t>(index),
                      scene_.seed * 1000003ULL + static_cast<std::uint64_t>(index));
}

RgbdFrame Renderer::render_frame(const Pose& cam, std::int64_t frame_id, std::uint64_t noise_seed) const {
  const auto& k = scene_.intrinsics;
  const CleanRender clean = render_clean(cam);
  RgbdFrame f(k.width, k.height, frame_id);
  f.timestamp = static_cast<double>(frame_id) / 30.0;
  if (scene_.noiseless) {
    for (std::size_t i = 0; i < f.pixel_count(); ++i) {
      f.depth[i] = quantize_depth(clean.depth[i], k.depth_scale);
      f.color[i] = clean.color[i];
    }
    return f;
  }
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto& nz = scene_.noise;
  const auto depth_at = [&](int u, int v) { return clean.depth[static_cast<std::size_t>(v) * k.width + u]; };
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const auto i = static_cast<std::size_t>(v) * k.width + u;
      double z = clean.depth[i];
      if (z > 0.0) {
        bool edge = false;
        for (int dv = -1; dv <= 1 && !edge; ++dv)
          for (int du = -1; du <= 1; ++du) {
            const int uu = u + du, vv = v + dv;
            if (uu < 0 || vv < 0 || uu >= k.width || vv >= k.height) continue;
            const double zn = depth_at(uu, vv);
            if (zn <= 0.0 || std::abs(zn - z) > nz.edge_jump) {
              edge = true;
              break;
            }
          }
        if (edge && nz.sigma_lateral > 0.0) {
          // the measurement slides laterally and may land on the other side of the discontinuity
          const double spx = nz.sigma_lateral * k.fx / z;
          const int uu = std::clamp(static_cast<int>(std::lround(u + spx * gauss(rng))), 0, k.width - 1);
          const int vv = std::clamp(static_cast<int>(std::lround(v + spx * gauss(rng))), 0, k.height - 1);
          z = depth_at(uu, vv);
        }
        if (z > 0.0) z += nz.sigma_base * z * z * gauss(rng);
      }
      f.depth[i] = quantize_depth(z, k.depth_scale);
      const Rgb& c = clean.color[i];
      if (nz.color_sigma > 0.0) {
        f.color[i] = Rgb{to_u8(c.r + nz.color_sigma * gauss(rng)), to_u8(c.g + nz.color_sigma * gauss(rng)),
                         to_u8(c.b + nz.color_sigma * gauss(rng))};
      } else {
        f.color[i] = c;
      }
    }
  }
  return f;
}

std::filesystem::path render_sequence(const SyntheticScene& scene, const std::filesystem::path& out_dir) {
  const Renderer renderer(scene);
  std::filesystem::create_directories(out_dir);
  io::SequenceManifest manifest;
  manifest.intrinsics = scene.intrinsics;
  io::Trajectory gt;
  for (std::size_t i = 0; i < scene.trajectory.size(); ++i) {
    const RgbdFrame f = renderer.render_frame(i);
    manifest.frames.push_back(io::write_frame(out_dir, f));
    gt.emplace_back(f.frame_id, scene.trajectory[i]);
  }
  const auto path = out_dir / "manifest.txt";
  io::write_manifest(path, manifest);
  io::write_trajectory(gt, out_dir / "groundtruth.txt");
  write_obj(scene.object, out_dir / "mesh.obj");
  return path;
}

// ---------------------------------------------------------------------------
// Scene files

SyntheticScene scene_from_config(const KeyValues& kv, const std::filesystem::path& base) {
  SyntheticScene s;
  const std::string kind = kv_string(kv, "object", "sphere");
  TriangleMesh mesh;
  if (kind == "sphere") {
    mesh = make_sphere(kv_double(kv, "sphere.radius", 0.06), kv_int(kv, "sphere.subdivisions", 4));
  } else if (kind == "box") {
    const auto sz = kv_doubles(kv, "box.size", {0.10, 0.08, 0.06});
    if (sz.size() != 3) throw InvalidInput("scene: box.size needs three values");
    mesh = make_box(sz[0], sz[1], sz[2]);
  } else if (kind == "pumpkin") {
    mesh = make_pumpkin(kv_double(kv, "pumpkin.radius", 0.07), kv_double(kv, "pumpkin.height", 0.09),
                        kv_int(kv, "pumpkin.ribs", 10), kv_double(kv, "pumpkin.rib_depth", 0.08),
                        kv_double(kv, "pumpkin.taper", 0.0));
  } else if (kind == "potato") {
    mesh = make_potato(kv_double(kv, "potato.radius", 0.06), static_cast<std::uint64_t>(kv_int(kv, "potato.seed", 3)));
  } else if (kind == "mesh") {
    const std::filesystem::path p = kv_string(kv, "mesh", "");
    if (p.empty()) throw InvalidInput("scene: object = mesh needs 'mesh = file.obj'");
    mesh = read_obj(p.is_absolute() ? p : base / p);
  } else {
    throw InvalidInput("scene: unknown object '" + kind + "'");
  }
  const auto rot = kv_doubles(kv, "object.rotation_deg", {0, 0, 0});
  if (rot.size() != 3) throw InvalidInput("scene: object.rotation_deg needs three values");
  const Pose orient = Pose::from_axis_angle(Eigen::Vector3d::UnitZ(), rot[2] * kDeg) *
                      Pose::from_axis_angle(Eigen::Vector3d::UnitY(), rot[1] * kDeg) *
                      Pose::from_axis_angle(Eigen::Vector3d::UnitX(), rot[0] * kDeg);
  s.object = place_on_table(mesh, orient);

  s.intrinsics.width = kv_int(kv, "camera.width", 640);
  s.intrinsics.height = kv_int(kv, "camera.height", 480);
  s.intrinsics.fx = kv_double(kv, "camera.fx", 525.0 * s.intrinsics.width / 640.0);
  s.intrinsics.fy = kv_double(kv, "camera.fy", s.intrinsics.fx);
  s.intrinsics.cx = kv_double(kv, "camera.cx", (s.intrinsics.width - 1) / 2.0);
  s.intrinsics.cy = kv_double(kv, "camera.cy", (s.intrinsics.height - 1) / 2.0);
  s.intrinsics.depth_scale = kv_double(kv, "camera.depth_scale", 0.001);

  s.noise.sigma_base = kv_double(kv, "noise.sigma_base", s.noise.sigma_base);
  s.noise.sigma_lateral = kv_double(kv, "noise.sigma_lateral", s.noise.sigma_lateral);
  s.noise.color_sigma = kv_double(kv, "noise.color_sigma", s.noise.color_sigma);
  s.noiseless = kv_bool(kv, "noiseless", false);
  s.texture_seed = static_cast<std::uint32_t>(kv_int(kv, "texture", 7));
  s.seed = static_cast<std::uint64_t>(kv_int(kv, "seed", 1));
  s.table_half_extent = kv_double(kv, "table.half_extent", 1.0);

  s.trajectory = orbit(s.object_center(), kv_double(kv, "orbit.radius", 1.0), kv_double(kv, "orbit.elevation_deg", 40.0),
                       kv_int(kv, "orbit.count", 60), kv_double(kv, "orbit.arc_deg", 360.0),
                       kv_double(kv, "orbit.start_deg", 0.0));
  s.validate();
  return s;
}

SyntheticScene load_scene(const std::filesystem::path& path) {
  return scene_from_config(read_key_values(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<double> mesh_distances(const ObjectCloud& cloud, const MeshBvh& bvh, const Pose& registration) {
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.valid[i]) slots.push_back(i);
  std::vector<double> d(slots.size());
  const auto n = static_cast<std::int64_t>(slots.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < n; ++j)
    d[static_cast<std::size_t>(j)] = std::sqrt(bvh.closest(registration * cloud.points[slots[static_cast<std::size_t>(j)]]).sq_distance);
  return d;
}

AccuracyReport evaluate_against_mesh(const ObjectCloud& cloud, const TriangleMesh& mesh, const Pose& registration,
                                     double bin_width_mm, int bins) {
  if (cloud.valid_count() == 0) throw InvalidInput("evaluate_against_mesh: empty cloud");
  if (mesh.triangles.empty()) throw InvalidInput("evaluate_against_mesh: empty mesh");
  if (!(bin_width_mm > 0.0) || bins < 1) throw InvalidInput("evaluate_against_mesh: bad histogram layout");
  const MeshBvh bvh(mesh);
  const auto d = mesh_distances(cloud, bvh, registration);
  AccuracyReport r;
  r.count = d.size();
  r.bin_width_mm = bin_width_mm;
  r.histogram.assign(static_cast<std::size_t>(bins), 0);
  double sum = 0.0;
  for (const double x : d) {
    const double mm = x * 1000.0;
    sum += mm;
    r.max_mm = std::max(r.max_mm, mm);
    const auto bin = std::min<std::size_t>(static_cast<std::size_t>(mm / bin_width_mm), r.histogram.size() - 1);
    ++r.histogram[bin];
  }
  r.mean_mm = sum / static_cast<double>(d.size());
  double var = 0.0;
  for (const double x : d) var += (x * 1000.0 - r.mean_mm) * (x * 1000.0 - r.mean_mm);
  r.sigma_mm = std::sqrt(var / static_cast<double>(d.size()));
  return r;
}

void write_report(const AccuracyReport& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# mean_mm sigma_mm max_mm\n";
  out << io::format_number(r.mean_mm) << ' ' << io::format_number(r.sigma_mm) << ' ' << io::format_number(r.max_mm) << '\n';
  out << "# bin_lo_mm bin_hi_mm count (" << r.count << " points)\n";
  for (std::size_t b = 0; b < r.histogram.size(); ++b) {
    const double lo = static_cast<double>(b) * r.bin_width_mm;
    out << io::format_number(lo) << ' '
        << (b + 1 == r.histogram.size() ? std::string("inf") : io::format_number(lo + r.bin_width_mm)) << ' '
        << r.histogram[b] << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

AccuracyReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  AccuracyReport r;
  std::string line;
  bool have_stats = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    if (!have_stats) {
      if (!(ss >> r.mean_mm >> r.sigma_mm >> r.max_mm)) throw IoError(path.string() + ": malformed statistics line");
      have_stats = true;
      continue;
    }
    std::string lo, hi;
    std::size_t count = 0;
    if (!(ss >> lo >> hi >> count)) throw IoError(path.string() + ": malformed histogram line");
    if (r.histogram.empty() && hi != "inf") r.bin_width_mm = std::stod(hi) - std::stod(lo);
    r.histogram.push_back(count);
    r.count += count;
  }
  if (!have_stats) throw IoError(path.string() + ": missing statistics");
  return r;
}

}  // namespace objmodel::synth
