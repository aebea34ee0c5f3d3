#include "objmodel/segmentation.hpp"

#include "objmodel/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <random>
#include <unordered_set>

namespace objmodel {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::int64_t voxel_key(const Eigen::Vector3d& p, double voxel, int dx = 0, int dy = 0, int dz = 0) {
  const auto cell = [&](double v, int d) {
    return (static_cast<std::int64_t>(std::floor(v / voxel)) + d + (1LL << 20)) & ((1LL << 21) - 1);
  };
  return (cell(p.x(), dx) << 42) | (cell(p.y(), dy) << 21) | cell(p.z(), dz);
}

// Plane through a point set, normal facing the sensor at the origin.
std::optional<PlaneModel> fit_plane(const ObjectCloud& cloud, const std::vector<std::int32_t>& idx) {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(idx.size());
  for (const auto i : idx) pts.push_back(cloud.points[static_cast<std::size_t>(i)]);
  const NormalEstimate est = fit_normal(pts);
  if (!est.valid) return std::nullopt;
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  PlaneModel plane;
  plane.normal = est.normal;
  plane.offset = -plane.normal.dot(c);
  if (plane.offset < 0.0) {
    plane.normal = -plane.normal;
    plane.offset = -plane.offset;
  }
  return plane;
}

bool plane_inlier(const ObjectCloud& cloud, std::size_t i, const PlaneModel& plane, double threshold, double cos_min) {
  return std::abs(plane.signed_distance(cloud.points[i])) <= threshold &&
         std::abs(plane.normal.dot(cloud.normals[i])) >= cos_min;
}

}  // namespace

PlaneModel PlaneModel::transformed(const Pose& pose) const {
  PlaneModel out;
  out.normal = pose.rotation * normal;
  out.offset = offset - out.normal.dot(pose.translation);
  out.inlier_indices = inlier_indices;
  return out;
}

void RegionOfInterest::validate() const {
  if (!min.allFinite() || !max.allFinite() || !(min.array() < max.array()).all())
    throw InvalidInput("region of interest: min must be below max in every coordinate");
}

void SegmentationConfig::validate() const {
  if (plane_iterations < 1) throw InvalidInput("segmentation.plane_iterations must be positive");
  if (!(plane_threshold_m > 0.0)) throw InvalidInput("segmentation.plane_threshold_m must be positive");
  if (plane_min_inliers < 3) throw InvalidInput("segmentation.plane_min_inliers must be at least 3");
  if (!(plane_normal_deg > 0.0 && plane_normal_deg <= 90.0))
    throw InvalidInput("segmentation.plane_normal_deg must be in (0, 90]");
  if (max_planes < 0) throw InvalidInput("segmentation.max_planes must not be negative");
  if (!(background_fraction >= 0.0 && background_fraction <= 1.0))
    throw InvalidInput("segmentation.background_fraction must be in [0, 1]");
  if (!(cluster_angle_deg > 0.0 && cluster_angle_deg < 180.0))
    throw InvalidInput("segmentation.cluster_angle_deg must be in (0, 180)");
  if (!(cluster_distance_m > 0.0)) throw InvalidInput("segmentation.cluster_distance_m must be positive");
  if (min_cluster_size < 1) throw InvalidInput("segmentation.min_cluster_size must be positive");
  if (!(voxel_m > 0.0)) throw InvalidInput("segmentation.voxel_m must be positive");
  if (normal_k < 3) throw InvalidInput("segmentation.normal_k must be at least 3");
}

std::vector<PlaneModel> detect_planes(const ObjectCloud& cloud, int max_planes, const SegmentationConfig& cfg) {
  cfg.validate();
  std::vector<PlaneModel> planes;
  if (cloud.empty() || max_planes <= 0) return planes;
  const double cos_min = std::cos(cfg.plane_normal_deg * kDeg);
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::uint8_t> taken(cloud.size(), 0);
  while (static_cast<int>(planes.size()) < max_planes) {
    std::vector<std::int32_t> cand;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (cloud.valid[i] && cloud.normal_valid[i] && !taken[i]) cand.push_back(static_cast<std::int32_t>(i));
    if (cand.size() < static_cast<std::size_t>(cfg.plane_min_inliers)) break;

    // hypotheses are scored on a fixed random subset, the winner on everything
    std::vector<std::int32_t> subset = cand;
    std::shuffle(subset.begin(), subset.end(), rng);
    subset.resize(std::min<std::size_t>(subset.size(), 4000));

    std::uniform_int_distribution<std::size_t> pick(0, cand.size() - 1);
    std::optional<PlaneModel> best;
    std::size_t best_score = 0;
    for (int it = 0; it < cfg.plane_iterations; ++it) {
      const Eigen::Vector3d& a = cloud.points[static_cast<std::size_t>(cand[pick(rng)])];
      const Eigen::Vector3d& b = cloud.points[static_cast<std::size_t>(cand[pick(rng)])];
      const Eigen::Vector3d& c = cloud.points[static_cast<std::size_t>(cand[pick(rng)])];
      const Eigen::Vector3d n = (b - a).cross(c - a);
      if (n.norm() < 1e-9) continue;
      PlaneModel h;
      h.normal = n.normalized();
      h.offset = -h.normal.dot(a);
      std::size_t score = 0;
      for (const auto i : subset)
        if (plane_inlier(cloud, static_cast<std::size_t>(i), h, cfg.plane_threshold_m, cos_min)) ++score;
      if (score > best_score) {
        best_score = score;
        best = h;
      }
    }
    if (!best) break;

    PlaneModel plane = *best;
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<std::int32_t> inl;
      for (const auto i : cand)
        if (plane_inlier(cloud, static_cast<std::size_t>(i), plane, cfg.plane_threshold_m, cos_min)) inl.push_back(i);
      if (inl.size() < 3) break;
      const auto refit = fit_plane(cloud, inl);
      if (!refit) break;
      plane = *refit;
    }
    plane.inlier_indices.clear();
    for (const auto i : cand)
      if (plane_inlier(cloud, static_cast<std::size_t>(i), plane, cfg.plane_threshold_m, cos_min))
        plane.inlier_indices.push_back(i);
    if (plane.inlier_indices.size() < static_cast<std::size_t>(cfg.plane_min_inliers)) break;
    for (const auto i : plane.inlier_indices) taken[static_cast<std::size_t>(i)] = 1;
    planes.push_back(std::move(plane));
  }
  std::stable_sort(planes.begin(), planes.end(), [](const PlaneModel& a, const PlaneModel& b) {
    return a.inlier_indices.size() > b.inlier_indices.size();
  });
  return planes;
}

std::vector<ObjectHypothesis> smooth_clusters(const ObjectCloud& cloud, const std::vector<std::int32_t>& plane_inliers,
                                              const SegmentationConfig& cfg) {
  cfg.validate();
  if (!cloud.organized()) throw InvalidInput("smooth_clusters: cloud is not organized");
  const double cos_min = std::cos(cfg.cluster_angle_deg * kDeg);
  const double sq_dist = cfg.cluster_distance_m * cfg.cluster_distance_m;
  std::vector<std::uint8_t> usable(cloud.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) usable[i] = cloud.valid[i] && cloud.normal_valid[i];
  for (const auto i : plane_inliers) usable.at(static_cast<std::size_t>(i)) = 0;

  std::vector<std::int32_t> label(cloud.size(), -1);
  std::vector<std::vector<std::int32_t>> clusters;
  std::deque<std::int32_t> queue;
  for (std::size_t seed = 0; seed < cloud.size(); ++seed) {
    if (!usable[seed] || label[seed] >= 0) continue;
    const auto id = static_cast<std::int32_t>(clusters.size());
    clusters.emplace_back();
    label[seed] = id;
    queue.push_back(static_cast<std::int32_t>(seed));
    while (!queue.empty()) {
      const auto cur = queue.front();
      queue.pop_front();
      clusters.back().push_back(cur);
      const int u0 = cur % cloud.width, v0 = cur / cloud.width;
      const auto c = static_cast<std::size_t>(cur);
      for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
          const int u = u0 + du, v = v0 + dv;
          if ((du == 0 && dv == 0) || u < 0 || v < 0 || u >= cloud.width || v >= cloud.height) continue;
          const auto nb = static_cast<std::size_t>(v) * static_cast<std::size_t>(cloud.width) + static_cast<std::size_t>(u);
          if (!usable[nb] || label[nb] >= 0) continue;
          const Eigen::Vector3d gap = cloud.points[c] - cloud.points[nb];
          if (gap.squaredNorm() >= sq_dist) continue;
          // a sharp but convex junction (box edge) still joins; concave ones (object on table) do not
          if (cloud.normals[c].dot(cloud.normals[nb]) < cos_min &&
              !(cfg.cluster_convex && (cloud.normals[c] - cloud.normals[nb]).dot(gap) > 0.0))
            continue;
          label[nb] = id;
          queue.push_back(static_cast<std::int32_t>(nb));
        }
    }
  }

  std::vector<ObjectHypothesis> out;
  for (auto& members : clusters) {
    if (members.size() < static_cast<std::size_t>(cfg.min_cluster_size)) continue;
    std::sort(members.begin(), members.end());
    ObjectHypothesis h;
    for (const auto i : members) h.centroid += cloud.points[static_cast<std::size_t>(i)];
    h.centroid /= static_cast<double>(members.size());
    h.pixel_indices = std::move(members);
    out.push_back(std::move(h));
  }
  std::stable_sort(out.begin(), out.end(), [](const ObjectHypothesis& a, const ObjectHypothesis& b) {
    if (a.pixel_indices.size() != b.pixel_indices.size()) return a.pixel_indices.size() > b.pixel_indices.size();
    return a.pixel_indices.front() < b.pixel_indices.front();
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].hypothesis_id = static_cast<int>(i);
  return out;
}

std::vector<ObjectHypothesis> object_hypotheses(const RgbdFrame& frame, const CameraIntrinsics& intrinsics,
                                                const SegmentationConfig& cfg) {
  const ObjectCloud cloud = estimate_normals_organized(depth_to_cloud(frame, intrinsics), cfg.normal_k);
  const auto planes = detect_planes(cloud, cfg.max_planes, cfg);
  std::vector<std::int32_t> inliers;
  const double floor = cfg.background_fraction * static_cast<double>(cloud.valid_count());
  for (const auto& p : planes)
    if (static_cast<double>(p.inlier_indices.size()) >= floor)
      inliers.insert(inliers.end(), p.inlier_indices.begin(), p.inlier_indices.end());
  auto hyps = smooth_clusters(cloud, inliers, cfg);
  if (!planes.empty()) {
    PlaneModel support = planes.front();
    support.inlier_indices.clear();
    for (auto& h : hyps) h.support_plane = support;
  }
  return hyps;
}

namespace {

// Largest plane of a frame, searched on a 4x subsampled organized cloud.
std::optional<PlaneModel> dominant_plane(const ObjectCloud& full, const SegmentationConfig& cfg) {
  constexpr int stride = 4;
  ObjectCloud sub;
  sub.width = full.width / stride;
  sub.height = full.height / stride;
  sub.resize(static_cast<std::size_t>(sub.width) * static_cast<std::size_t>(sub.height));
  for (int v = 0; v < sub.height; ++v)
    for (int u = 0; u < sub.width; ++u) {
      const auto s = static_cast<std::size_t>(v) * static_cast<std::size_t>(sub.width) + static_cast<std::size_t>(u);
      const auto f = static_cast<std::size_t>(v * stride) * static_cast<std::size_t>(full.width) +
                     static_cast<std::size_t>(u * stride);
      sub.points[s] = full.points[f];
      sub.valid[s] = full.valid[f];
    }
  if (sub.valid_count() < 3) return std::nullopt;
  const ObjectCloud withn = estimate_normals_organized(sub, cfg.normal_k, 3);
  SegmentationConfig c = cfg;
  c.plane_min_inliers = std::max(50, cfg.plane_min_inliers / (stride * stride));
  auto planes = detect_planes(withn, 1, c);
  if (planes.empty()) return std::nullopt;
  planes.front().inlier_indices.clear();
  return planes.front();
}

}  // namespace

void segment_by_roi(std::vector<Keyframe>& keyframes, const RegionOfInterest& roi, const CameraIntrinsics& intrinsics,
                    const SegmentationConfig& cfg) {
  roi.validate();
  cfg.validate();
  bool any = false;
  for (auto& kf : keyframes) {
    const ObjectCloud cloud = depth_to_cloud(kf.frame, intrinsics);
    std::vector<std::int32_t> inside;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (cloud.valid[i] && roi.contains(kf.pose * cloud.points[i])) inside.push_back(static_cast<std::int32_t>(i));
    const auto plane = inside.empty() ? std::nullopt : dominant_plane(cloud, cfg);
    kf.object_indices.clear();
    if (plane) {
      bool touches = false;
      for (const auto i : inside)
        if (std::abs(plane->signed_distance(cloud.points[static_cast<std::size_t>(i)])) <= cfg.plane_threshold_m) {
          touches = true;
          break;
        }
      for (const auto i : inside)
        if (!touches || plane->signed_distance(cloud.points[static_cast<std::size_t>(i)]) > cfg.plane_threshold_m)
          kf.object_indices.push_back(i);
    } else {
      kf.object_indices = std::move(inside);
    }
    any = any || !kf.object_indices.empty();
  }
  if (!any) throw StageError("segmentation: region of interest contains no object points in any keyframe");
}

void propagate_selection(std::vector<Keyframe>& keyframes, std::size_t reference, const ObjectHypothesis& selected,
                         const CameraIntrinsics& intrinsics, const SegmentationConfig& cfg) {
  cfg.validate();
  if (reference >= keyframes.size()) throw InvalidInput("propagate_selection: reference keyframe out of range");
  if (selected.pixel_indices.empty()) throw InvalidInput("propagate_selection: empty hypothesis");
  const Keyframe& ref = keyframes[reference];
  const ObjectCloud ref_cloud = depth_to_cloud(ref.frame, intrinsics);

  std::unordered_set<std::int64_t> occupied;
  for (const auto i : selected.pixel_indices) {
    const auto s = static_cast<std::size_t>(i);
    if (s >= ref_cloud.size() || !ref_cloud.valid[s]) throw InvalidInput("propagate_selection: hypothesis pixel without depth");
    const Eigen::Vector3d p = ref.pose * ref_cloud.points[s];
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) occupied.insert(voxel_key(p, cfg.voxel_m, dx, dy, dz));
  }
  std::optional<PlaneModel> support;
  if (selected.support_plane) {
    support = selected.support_plane->transformed(ref.pose);
    support->inlier_indices.clear();
  }

  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    auto& kf = keyframes[k];
    if (k == reference) {
      kf.object_indices = selected.pixel_indices;
      continue;
    }
    const ObjectCloud cloud = depth_to_cloud(kf.frame, intrinsics);
    kf.object_indices.clear();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (!cloud.valid[i]) continue;
      const Eigen::Vector3d p = kf.pose * cloud.points[i];
      if (!occupied.count(voxel_key(p, cfg.voxel_m))) continue;
      if (support && support->signed_distance(p) <= cfg.plane_threshold_m) continue;
      kf.object_indices.push_back(static_cast<std::int32_t>(i));
    }
  }
}

}  // namespace objmodel
