#include "objmodel/geometry.hpp"

#include "objmodel/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

namespace objmodel {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInput("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvalidInput("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw InvalidInput("intrinsics: principal point outside the image");
  if (!(depth_scale > 0.0)) throw InvalidInput("intrinsics: depth_scale must be positive");
}

RgbdFrame::RgbdFrame(int w, int h, std::int64_t id)
    : width(w), height(h), frame_id(id), color(static_cast<std::size_t>(w) * h), depth(static_cast<std::size_t>(w) * h, 0) {}

void RgbdFrame::validate() const {
  if (width <= 0 || height <= 0) throw InvalidInput("frame: empty image");
  if (color.size() != pixel_count() || depth.size() != pixel_count())
    throw InvalidInput("frame " + std::to_string(frame_id) + ": colour/depth size mismatch");
}

// ---------------------------------------------------------------------------
// Pose

Pose Pose::from_axis_angle(const Eigen::Vector3d& axis, double angle_rad, const Eigen::Vector3d& t) {
  Pose p;
  p.rotation = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
  p.translation = t;
  return p;
}

Pose Pose::from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) {
  Pose p;
  p.rotation = q.normalized().toRotationMatrix();
  p.translation = t;
  return p;
}

Pose Pose::exp(const Eigen::Matrix<double, 6, 1>& twist) {
  Pose p;
  const Eigen::Vector3d w = twist.head<3>();
  const double angle = w.norm();
  if (angle > 0.0) p.rotation = Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
  p.translation = twist.tail<3>();
  return p;
}

Pose Pose::inverse() const {
  Pose p;
  p.rotation = rotation.transpose();
  p.translation = -(p.rotation * translation);
  return p;
}

Pose Pose::operator*(const Pose& other) const {
  Pose p;
  p.rotation = rotation * other.rotation;
  p.translation = rotation * other.translation + translation;
  return p;
}

Eigen::Quaterniond Pose::quaternion() const {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

double Pose::angle() const {
  const double c = std::clamp((rotation.trace() - 1.0) * 0.5, -1.0, 1.0);
  // acos loses precision near zero; use the antisymmetric part there.
  if (c > 0.99) {
    const Eigen::Vector3d s(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
                            rotation(1, 0) - rotation(0, 1));
    return std::asin(std::min(1.0, 0.5 * s.norm()));
  }
  return std::acos(c);
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Eigen::Matrix3d should_be_identity = rotation.transpose() * rotation;
  if ((should_be_identity - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

double rotation_distance(const Pose& a, const Pose& b) { return (a.inverse() * b).angle(); }

double translation_distance(const Pose& a, const Pose& b) { return (a.translation - b.translation).norm(); }

// ---------------------------------------------------------------------------
// ObjectCloud

ObjectCloud::ObjectCloud(std::size_t n) { resize(n); }

void ObjectCloud::resize(std::size_t n) {
  points.resize(n, Eigen::Vector3d::Zero());
  normals.resize(n, Eigen::Vector3d::Zero());
  normal_valid.resize(n, 0);
  colors.resize(n);
  edge_flags.resize(n, 0);
  weights.resize(n, 1.0);
  valid.resize(n, 1);
  pixel.resize(n, -1);
}

bool ObjectCloud::has_normals() const {
  return std::any_of(normal_valid.begin(), normal_valid.end(), [](std::uint8_t v) { return v != 0; });
}

std::size_t ObjectCloud::valid_count() const {
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; }));
}

void ObjectCloud::push_back(const Eigen::Vector3d& p, const Eigen::Vector3d& n, bool normal_ok, Rgb c,
                            bool edge, double weight, std::int32_t pixel_index) {
  points.push_back(p);
  normals.push_back(normal_ok ? n : Eigen::Vector3d::Zero());
  normal_valid.push_back(normal_ok ? 1 : 0);
  colors.push_back(c);
  edge_flags.push_back(edge ? 1 : 0);
  weights.push_back(weight);
  valid.push_back(1);
  pixel.push_back(pixel_index);
}

void ObjectCloud::append(const ObjectCloud& other) {
  points.insert(points.end(), other.points.begin(), other.points.end());
  normals.insert(normals.end(), other.normals.begin(), other.normals.end());
  normal_valid.insert(normal_valid.end(), other.normal_valid.begin(), other.normal_valid.end());
  colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  edge_flags.insert(edge_flags.end(), other.edge_flags.begin(), other.edge_flags.end());
  weights.insert(weights.end(), other.weights.begin(), other.weights.end());
  valid.insert(valid.end(), other.valid.begin(), other.valid.end());
  pixel.insert(pixel.end(), other.pixel.begin(), other.pixel.end());
  width = 0;
  height = 0;
}

void ObjectCloud::check_invariants() const {
  const std::size_t n = points.size();
  if (normals.size() != n || normal_valid.size() != n || colors.size() != n || edge_flags.size() != n ||
      weights.size() != n || valid.size() != n || pixel.size() != n)
    throw InvalidInput("cloud: attribute lists differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    if (normal_valid[i] && std::abs(normals[i].norm() - 1.0) > 1e-6)
      throw InvalidInput("cloud: normal " + std::to_string(i) + " is not unit length");
    if (!(weights[i] >= 0.0 && weights[i] <= 1.0))
      throw InvalidInput("cloud: weight " + std::to_string(i) + " outside [0,1]");
  }
}

std::vector<Eigen::Vector3d> ObjectCloud::valid_points() const {
  std::vector<Eigen::Vector3d> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i)
    if (valid[i]) out.push_back(points[i]);
  return out;
}

ObjectCloud extract(const ObjectCloud& cloud, std::span<const std::int32_t> indices) {
  ObjectCloud out;
  const std::size_t n = indices.size();
  out.points.reserve(n);
  out.normals.reserve(n);
  out.normal_valid.reserve(n);
  out.colors.reserve(n);
  out.edge_flags.reserve(n);
  out.weights.reserve(n);
  out.valid.reserve(n);
  out.pixel.reserve(n);
  for (const std::int32_t idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= cloud.size()) throw InvalidInput("extract: index out of range");
    const auto i = static_cast<std::size_t>(idx);
    out.points.push_back(cloud.points[i]);
    out.normals.push_back(cloud.normals[i]);
    out.normal_valid.push_back(cloud.normal_valid[i]);
    out.colors.push_back(cloud.colors[i]);
    out.edge_flags.push_back(cloud.edge_flags[i]);
    out.weights.push_back(cloud.weights[i]);
    out.valid.push_back(cloud.valid[i]);
    out.pixel.push_back(cloud.pixel[i] >= 0 ? cloud.pixel[i] : idx);
  }
  return out;
}

ObjectCloud compact(const ObjectCloud& cloud) {
  std::vector<std::int32_t> keep;
  keep.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.valid[i]) keep.push_back(static_cast<std::int32_t>(i));
  ObjectCloud out = extract(cloud, keep);
  if (!cloud.organized()) {
    // extract() fills unknown pixels with the slot index; undo for unorganized input
    for (std::size_t i = 0; i < keep.size(); ++i) out.pixel[i] = cloud.pixel[static_cast<std::size_t>(keep[i])];
  }
  return out;
}

ObjectCloud transform_cloud(const ObjectCloud& cloud, const Pose& pose) {
  ObjectCloud out = cloud;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.points[i] = pose * cloud.points[i];
    if (cloud.normal_valid[i]) out.normals[i] = pose.rotate(cloud.normals[i]);
  }
  return out;
}

Eigen::Vector3d back_project(const CameraIntrinsics& k, double u, double v, double z) {
  return {(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z};
}

bool project(const CameraIntrinsics& k, const Eigen::Vector3d& p, Eigen::Vector2d& uv) {
  if (!(p.z() > 0.0)) return false;
  uv = {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
  return true;
}

ObjectCloud depth_to_cloud(const RgbdFrame& frame, const CameraIntrinsics& intrinsics) {
  frame.validate();
  if (frame.width != intrinsics.width || frame.height != intrinsics.height)
    throw InvalidInput("depth_to_cloud: frame " + std::to_string(frame.frame_id) + " is " +
                       std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                       ", intrinsics expect " + std::to_string(intrinsics.width) + "x" +
                       std::to_string(intrinsics.height));
  ObjectCloud cloud(frame.pixel_count());
  cloud.width = frame.width;
  cloud.height = frame.height;
  for (int v = 0; v < frame.height; ++v) {
    for (int u = 0; u < frame.width; ++u) {
      const auto i = static_cast<std::size_t>(frame.index(u, v));
      const double z = frame.depth_m(u, v, intrinsics.depth_scale);
      cloud.colors[i] = frame.color[i];
      cloud.pixel[i] = static_cast<std::int32_t>(i);
      if (z > 0.0 && std::isfinite(z)) {
        cloud.points[i] = back_project(intrinsics, u, v, z);
      } else {
        cloud.valid[i] = 0;
        cloud.points[i] = Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
      }
    }
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Normals

NormalEstimate fit_normal(std::span<const Eigen::Vector3d> nb) {
  NormalEstimate out;
  if (nb.size() < 3) return out;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : nb) mean += p;
  mean /= static_cast<double>(nb.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : nb) {
    const Eigen::Vector3d d = p - mean;
    cov.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  const Eigen::Vector3d ev = solver.eigenvalues();  // ascending
  if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2]) return out;
  out.normal = solver.eigenvectors().col(0).normalized();
  out.curvature = ev[0] / ev.sum();
  out.valid = true;
  return out;
}

ObjectCloud estimate_normals(const ObjectCloud& cloud, int k, const Eigen::Vector3d& viewpoint) {
  if (k < 3) throw InvalidInput("estimate_normals: k must be at least 3");
  std::vector<std::int32_t> slots;
  slots.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.valid[i]) slots.push_back(static_cast<std::int32_t>(i));
  if (slots.size() < static_cast<std::size_t>(k))
    throw InvalidInput("estimate_normals: cloud has fewer than k valid points");

  std::vector<Eigen::Vector3d> pts;
  pts.reserve(slots.size());
  for (const auto s : slots) pts.push_back(cloud.points[static_cast<std::size_t>(s)]);
  const NeighborIndex index(std::move(pts));

  ObjectCloud out = cloud;
  const auto n = static_cast<std::int64_t>(slots.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < n; ++j) {
    const auto slot = static_cast<std::size_t>(slots[static_cast<std::size_t>(j)]);
    const Eigen::Vector3d& p = cloud.points[slot];
    const auto hits = index.knn(p, static_cast<std::size_t>(k));
    std::vector<Eigen::Vector3d> nb;
    nb.reserve(hits.size());
    for (const auto& h : hits) nb.push_back(index.point(h.index));
    NormalEstimate est = fit_normal(nb);
    if (est.valid && est.normal.dot(viewpoint - p) < 0.0) est.normal = -est.normal;
    out.normals[slot] = est.valid ? est.normal : Eigen::Vector3d::Zero();
    out.normal_valid[slot] = est.valid ? 1 : 0;
  }
  return out;
}

ObjectCloud estimate_normals_organized(const ObjectCloud& cloud, int k, int half_window,
                                       std::span<const std::int32_t> pixels) {
  if (!cloud.organized()) throw InvalidInput("estimate_normals_organized: cloud is not organized");
  if (k < 3) throw InvalidInput("estimate_normals_organized: k must be at least 3");
  std::vector<std::int32_t> todo(pixels.begin(), pixels.end());
  if (todo.empty()) {
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (cloud.valid[i]) todo.push_back(static_cast<std::int32_t>(i));
  }
  ObjectCloud out = cloud;
  const auto n = static_cast<std::int64_t>(todo.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < n; ++j) {
    const int idx = todo[static_cast<std::size_t>(j)];
    const auto slot = static_cast<std::size_t>(idx);
    if (!cloud.valid[slot]) continue;
    const int u0 = idx % cloud.width;
    const int v0 = idx / cloud.width;
    const Eigen::Vector3d& p = cloud.points[slot];
    std::vector<std::pair<double, int>> cand;
    for (int v = std::max(0, v0 - half_window); v <= std::min(cloud.height - 1, v0 + half_window); ++v)
      for (int u = std::max(0, u0 - half_window); u <= std::min(cloud.width - 1, u0 + half_window); ++u) {
        const auto s = static_cast<std::size_t>(v * cloud.width + u);
        if (cloud.valid[s]) cand.emplace_back((cloud.points[s] - p).squaredNorm(), static_cast<int>(s));
      }
    const std::size_t take = std::min(cand.size(), static_cast<std::size_t>(k));
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
    std::vector<Eigen::Vector3d> nb;
    nb.reserve(take);
    for (std::size_t t = 0; t < take; ++t) nb.push_back(cloud.points[static_cast<std::size_t>(cand[t].second)]);
    NormalEstimate est = fit_normal(nb);
    if (est.valid && est.normal.dot(-p) < 0.0) est.normal = -est.normal;
    out.normals[slot] = est.valid ? est.normal : Eigen::Vector3d::Zero();
    out.normal_valid[slot] = est.valid ? 1 : 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weighted Procrustes

Pose rigid_from_correspondences(std::span<const Eigen::Vector3d> src, std::span<const Eigen::Vector3d> dst,
                                std::span<const double> weights) {
  if (src.size() != dst.size()) throw InvalidInput("rigid_from_correspondences: size mismatch");
  if (!weights.empty() && weights.size() != src.size())
    throw InvalidInput("rigid_from_correspondences: weight count mismatch");
  if (src.size() < 3) throw EstimationError("rigid_from_correspondences: fewer than 3 correspondences");

  double wsum = 0.0;
  Eigen::Vector3d cs = Eigen::Vector3d::Zero();
  Eigen::Vector3d cd = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w >= 0.0)) throw InvalidInput("rigid_from_correspondences: negative weight");
    wsum += w;
    cs += w * src[i];
    cd += w * dst[i];
  }
  if (!(wsum > 0.0)) throw EstimationError("rigid_from_correspondences: zero total weight");
  cs /= wsum;
  cd /= wsum;

  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const Eigen::Vector3d a = src[i] - cs;
    cross.noalias() += w * a * (dst[i] - cd).transpose();
    scatter.noalias() += w * a * a.transpose();
  }
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(scatter, Eigen::EigenvaluesOnly).eigenvalues();
  if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2])
    throw EstimationError("rigid_from_correspondences: source points are collinear");

  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  Pose pose;
  pose.rotation = v * d.asDiagonal() * u.transpose();
  pose.translation = cd - pose.rotation * cs;
  return pose;
}

}  // namespace objmodel
