#include "objmodel/postprocess.hpp"

#include "objmodel/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace objmodel {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Observation {
  Eigen::Vector3d x;
  Eigen::Vector3d n;
  double w = 1.0;
  Rgb color;
  bool edge = false;
  std::int64_t view = 0;
  std::size_t index = 0;
};

}  // namespace

void NoiseModelParams::validate() const {
  if (!(theta_max_deg > 0.0 && theta_max_deg < 90.0)) throw InvalidInput("noise.theta_max must be in (0, 90)");
  if (!(sigma_lateral > 0.0)) throw InvalidInput("noise.sigma_lateral must be positive");
  if (!(edge_depth_jump > 0.0)) throw InvalidInput("noise.edge_depth_jump must be positive");
  if (!(grazing_cutoff_deg > 0.0 && grazing_cutoff_deg <= 90.0))
    throw InvalidInput("noise.grazing_cutoff_deg must be in (0, 90]");
}

void FusionConfig::validate() const {
  if (!(radius > 0.0)) throw InvalidInput("fusion.radius must be positive");
  if (!(w_min_total >= 0.0)) throw InvalidInput("fusion.w_min_total must not be negative");
  if (!(normal_angle_deg > 0.0 && normal_angle_deg <= 180.0))
    throw InvalidInput("fusion.normal_angle_deg must be in (0, 180]");
  if (!(normal_tolerance > 0.0)) throw InvalidInput("fusion.normal_tolerance must be positive");
  if (!(contradiction_sigmas > 0.0)) throw InvalidInput("fusion.contradiction_sigmas must be positive");
  if (min_contradictions < 1) throw InvalidInput("fusion.min_contradictions must be positive");
}

double noise_weight(double theta_deg, double edge_distance, const NoiseModelParams& p) {
  if (!std::isfinite(theta_deg) || theta_deg >= 90.0) return 0.0;
  double a = 1.0;
  if (theta_deg >= p.theta_max_deg) a = std::clamp(1.0 - (theta_deg - p.theta_max_deg) / (90.0 - p.theta_max_deg), 0.0, 1.0);
  const double d = std::max(0.0, edge_distance);
  const double b = 1.0 - 0.5 * std::exp(-(d * d) / (p.sigma_lateral * p.sigma_lateral));
  return std::clamp(a * b, 0.0, 1.0);
}

double view_angle_deg(const Eigen::Vector3d& point, const Eigen::Vector3d& normal) {
  const double c = normal.normalized().dot(-point.normalized());
  return std::acos(std::clamp(c, -1.0, 1.0)) / kDeg;
}

ObjectCloud flag_depth_edges(const ObjectCloud& cloud, const NoiseModelParams& params) {
  if (!cloud.organized()) throw InvalidInput("flag_depth_edges: cloud is not organized");
  ObjectCloud out = cloud;
  const int w = cloud.width, h = cloud.height;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const auto i = static_cast<std::size_t>(v) * static_cast<std::size_t>(w) + static_cast<std::size_t>(u);
      out.edge_flags[i] = 0;
      if (!cloud.valid[i]) continue;
      const double z = cloud.points[i].z();
      bool edge = false;
      for (int dv = -1; dv <= 1 && !edge; ++dv)
        for (int du = -1; du <= 1 && !edge; ++du) {
          if (du == 0 && dv == 0) continue;
          const int uu = u + du, vv = v + dv;
          if (uu < 0 || vv < 0 || uu >= w || vv >= h) {
            edge = true;
            continue;
          }
          const auto j = static_cast<std::size_t>(vv) * static_cast<std::size_t>(w) + static_cast<std::size_t>(uu);
          edge = !cloud.valid[j] || std::abs(cloud.points[j].z() - z) > params.edge_depth_jump;
        }
      out.edge_flags[i] = edge ? 1 : 0;
    }
  return out;
}

ObjectCloud compute_weights(const ObjectCloud& cloud, const NoiseModelParams& params) {
  params.validate();
  std::vector<Eigen::Vector3d> edges;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.valid[i] && cloud.edge_flags[i]) edges.push_back(cloud.points[i]);
  const NeighborIndex index(std::move(edges));
  const double cap = 5.0 * params.sigma_lateral;

  ObjectCloud out = cloud;
  const auto n = static_cast<std::int64_t>(cloud.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    if (!cloud.valid[i]) continue;
    if (!cloud.normal_valid[i]) {
      out.weights[i] = 0.0;
      continue;
    }
    const double theta = view_angle_deg(cloud.points[i], cloud.normals[i]);
    double d = cap;
    if (const auto hit = index.nearest(cloud.points[i], cap * cap)) d = std::sqrt(hit->sq_distance);
    out.weights[i] = noise_weight(theta, d, params);
  }
  return out;
}

WeightedView weighted_view(const Keyframe& keyframe, const CameraIntrinsics& intrinsics, const NoiseModelParams& params,
                           int normal_k) {
  if (keyframe.object_indices.empty()) throw InvalidInput("weighted_view: keyframe has no object indices");
  const ObjectCloud flagged = flag_depth_edges(depth_to_cloud(keyframe.frame, intrinsics), params);
  const ObjectCloud with_normals = estimate_normals_organized(flagged, normal_k, 4, keyframe.object_indices);
  // only object pixels carry normals; everything else gets weight 0 and is not extracted
  const ObjectCloud weighted = compute_weights(with_normals, params);
  WeightedView v;
  v.id = keyframe.frame.frame_id;
  v.pose = keyframe.pose;
  v.cloud = extract(weighted, keyframe.object_indices);
  return v;
}

ObjectCloud assemble_model(const std::vector<WeightedView>& views) {
  ObjectCloud out;
  for (const auto& v : views) out.append(compact(transform_cloud(v.cloud, v.pose)));
  return out;
}

ObjectCloud fuse_observations(const std::vector<WeightedView>& views, const FusionConfig& cfg,
                              const NoiseModelParams& params, FusionStats* stats_out) {
  cfg.validate();
  params.validate();
  FusionStats stats;
  const double cos_normal = std::cos(cfg.normal_angle_deg * kDeg);

  std::vector<Observation> obs;
  for (const auto& v : views) {
    const auto& c = v.cloud;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!c.valid[i]) continue;
      ++stats.observations;
      if (!c.normal_valid[i]) {
        ++stats.dropped_grazing;
        continue;
      }
      double w = 1.0;
      if (cfg.use_weights) {
        w = c.weights[i];
        if (w <= 0.0 || view_angle_deg(c.points[i], c.normals[i]) > params.grazing_cutoff_deg) {
          ++stats.dropped_grazing;
          continue;
        }
      }
      obs.push_back({v.pose * c.points[i], v.pose.rotate(c.normals[i]).normalized(), w, c.colors[i],
                     c.edge_flags[i] != 0, v.id, i});
    }
  }
  // canonical order: heaviest first, then position, then origin
  std::sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) {
    if (a.w != b.w) return a.w > b.w;
    const auto ka = std::make_tuple(a.x.x(), a.x.y(), a.x.z(), a.view, a.index);
    const auto kb = std::make_tuple(b.x.x(), b.x.y(), b.x.z(), b.view, b.index);
    return ka < kb;
  });

  if (cfg.use_weights && !obs.empty()) {
    std::vector<Eigen::Vector3d> pts;
    pts.reserve(obs.size());
    for (const auto& o : obs) pts.push_back(o.x);
    const NeighborIndex index(std::move(pts));
    const double behind = cfg.contradiction_sigmas * params.sigma_lateral;
    const double reach = behind + 2.0 * cfg.radius;
    std::vector<std::uint8_t> keep(obs.size(), 1);
    const auto n = static_cast<std::int64_t>(obs.size());
#pragma omp parallel for schedule(dynamic, 256)
    for (std::int64_t k = 0; k < n; ++k) {
      const auto& p = obs[static_cast<std::size_t>(k)];
      int against = 0;
      for (const auto& hit : index.radius(p.x, reach)) {
        const auto& q = obs[static_cast<std::size_t>(hit.index)];
        if (q.view == p.view || !(q.w > p.w) || q.n.dot(p.n) < cos_normal) continue;
        const Eigen::Vector3d d = q.x - p.x;
        const double offset = d.dot(p.n);
        if (offset >= -behind || (d - offset * p.n).norm() > cfg.radius) continue;
        if (++against >= cfg.min_contradictions) break;
      }
      keep[static_cast<std::size_t>(k)] = against >= cfg.min_contradictions ? 0 : 1;
    }
    std::vector<Observation> kept;
    kept.reserve(obs.size());
    for (std::size_t k = 0; k < obs.size(); ++k) {
      if (keep[k])
        kept.push_back(obs[k]);
      else
        ++stats.removed_inconsistent;
    }
    obs.swap(kept);
  }

  ObjectCloud out;
  if (!obs.empty()) {
    std::vector<Eigen::Vector3d> pts;
    pts.reserve(obs.size());
    for (const auto& o : obs) pts.push_back(o.x);
    const NeighborIndex index(std::move(pts));
    std::vector<std::uint8_t> used(obs.size(), 0);
    std::vector<std::size_t> group;
    std::vector<std::int64_t> group_views;
    std::vector<std::pair<double, std::size_t>> pick;  // (lateral distance, observation) per view
    const double sq_radius = cfg.radius * cfg.radius;
    const double reach = std::sqrt(sq_radius + cfg.normal_tolerance * cfg.normal_tolerance);
    for (std::size_t s = 0; s < obs.size(); ++s) {
      if (used[s]) continue;
      const auto& p = obs[s];
      // Shift the group centre to the weighted mean of its members until it
      // settles; members are the seed plus, per other view, the compatible
      // observation laterally closest to the centre within the radius.
      Eigen::Vector3d center = p.x;
      for (int round = 0; round < 10; ++round) {
        group.assign(1, s);
        group_views.assign(1, p.view);
        pick.clear();
        for (const auto& hit : index.radius(center, reach)) {
          const auto q = static_cast<std::size_t>(hit.index);
          if (q == s || used[q]) continue;
          const auto& o = obs[q];
          if (o.view == p.view || o.n.dot(p.n) < cos_normal) continue;
          const Eigen::Vector3d d = o.x - center;
          const double along = d.dot(p.n);
          const double lateral = (d - along * p.n).squaredNorm();
          if (lateral > sq_radius || std::abs(along) > cfg.normal_tolerance) continue;
          const auto it = std::find(group_views.begin(), group_views.end(), o.view);
          if (it == group_views.end()) {
            group_views.push_back(o.view);
            pick.emplace_back(lateral, q);
          } else {
            auto& slot = pick[static_cast<std::size_t>(it - group_views.begin()) - 1];
            if (lateral < slot.first) slot = {lateral, q};
          }
        }
        for (const auto& [lat, q] : pick) group.push_back(q);
        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        double wm = 0.0;
        for (const auto g : group) {
          mean += obs[g].w * obs[g].x;
          wm += obs[g].w;
        }
        if (!(wm > 0.0)) break;
        mean /= wm;
        const bool settled = (mean - center).norm() < 1e-6 * cfg.radius;
        center = mean;
        if (settled) break;
      }
      for (const auto g : group) used[g] = 1;
      double wsum = 0.0;
      for (const auto g : group) wsum += obs[g].w;
      if (group.size() == 1 && wsum >= cfg.w_min_total) {
        out.push_back(p.x, p.n, true, p.color, p.edge, p.w);
        ++stats.groups_averaged;
      } else if (wsum >= cfg.w_min_total && wsum > 0.0) {
        Eigen::Vector3d x = Eigen::Vector3d::Zero(), nrm = Eigen::Vector3d::Zero(), col = Eigen::Vector3d::Zero();
        for (const auto g : group) {
          const auto& o = obs[g];
          x += o.w * o.x;
          nrm += o.w * o.n;
          col += o.w * Eigen::Vector3d(o.color.r, o.color.g, o.color.b);
        }
        x /= wsum;
        col /= wsum;
        // keep the merged point within `radius` of at least one of its members
        std::size_t nearest = group.front();
        for (const auto g : group)
          if ((obs[g].x - x).squaredNorm() < (obs[nearest].x - x).squaredNorm()) nearest = g;
        const Eigen::Vector3d off = x - obs[nearest].x;
        if (off.norm() > cfg.radius) x = obs[nearest].x + off * (cfg.radius / off.norm());
        const bool nok = nrm.norm() > 1e-12;
        const auto ch = [](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); };
        out.push_back(x, nok ? Eigen::Vector3d(nrm.normalized()) : p.n, true, Rgb{ch(col.x()), ch(col.y()), ch(col.z())},
                      p.edge, p.w);
        ++stats.groups_averaged;
      } else if (cfg.keep_light_groups) {
        for (const auto g : group) {
          const auto& o = obs[g];
          out.push_back(o.x, o.n, true, o.color, o.edge, o.w);
          ++stats.kept_unaveraged;
        }
      } else {
        stats.dropped_light += group.size();
      }
    }
  }
  stats.output = out.size();
  if (stats_out) *stats_out = stats;
  return out;
}

}  // namespace objmodel
