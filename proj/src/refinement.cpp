#include "objmodel/refinement.hpp"

#include "objmodel/error.hpp"
#include "objmodel/postprocess.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

namespace objmodel {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kNullRatio = 1e-2;
constexpr double kDamping = 1e-3;

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

NeighborIndex camera_index(const ObjectCloud& cloud) { return NeighborIndex(cloud.points); }

// Mutual nearest neighbours between views i and j under the gate, with the
// normal test done in model coordinates.
std::vector<Correspondence> match(const ObjectCloud& ci, const Pose& pi, const NeighborIndex& ti, const ObjectCloud& cj,
                                  const Pose& pj, const NeighborIndex& tj, double gate, double cos_normal) {
  const Pose i_to_j = pj.inverse() * pi;
  const Pose j_to_i = i_to_j.inverse();
  const double sq_gate = gate * gate;
  std::vector<Correspondence> out;
  for (std::size_t a = 0; a < ci.size(); ++a) {
    const auto hit = tj.nearest(i_to_j * ci.points[a], sq_gate);
    if (!hit) continue;
    const auto back = ti.nearest(j_to_i * cj.points[static_cast<std::size_t>(hit->index)], sq_gate);
    if (!back || back->index != static_cast<int>(a)) continue;
    const auto b = static_cast<std::size_t>(hit->index);
    if (i_to_j.rotate(ci.normals[a]).dot(cj.normals[b]) < cos_normal) continue;
    out.push_back({static_cast<int>(a), hit->index, ci.weights[a] * cj.weights[b]});
  }
  return out;
}

// Point-to-plane residual terms for one moving cloud: source points already in
// the common frame, target points and normals likewise.
struct Term {
  Eigen::Vector3d x;  // moving point
  Eigen::Vector3d q;  // fixed point
  Eigen::Vector3d n;  // fixed normal
  double w;
};

// Solve the linearised update about the weighted centroid of the moving
// points. Rotation parameters are scaled by the spread of the points so both
// halves of the system are comparable; directions the data barely constrains
// (rotation about a sphere's centre, sliding along a cylinder) are damped.
Vec6 solve_terms(const std::vector<Term>& terms, Eigen::Vector3d& center) {
  center.setZero();
  double wsum = 0.0;
  for (const auto& t : terms) {
    center += t.w * t.x;
    wsum += t.w;
  }
  if (!(wsum > 0.0)) return Vec6::Zero();
  center /= wsum;
  double spread = 0.0;
  for (const auto& t : terms) spread += t.w * (t.x - center).squaredNorm();
  spread = std::sqrt(spread / wsum);
  if (!(spread > 0.0)) spread = 1.0;
  Mat6 h = Mat6::Zero();
  Vec6 g = Vec6::Zero();
  for (const auto& t : terms) {
    Vec6 j;
    j.head<3>() = ((t.x - center) / spread).cross(t.n);
    j.tail<3>() = t.n;
    const double r = t.n.dot(t.x - t.q);
    h.noalias() += t.w * j * j.transpose();
    g.noalias() += t.w * r * j;
  }
  const Eigen::SelfAdjointEigenSolver<Mat6> es(h);
  const auto& ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  Vec6 xi = Vec6::Zero();
  if (!(top > 0.0)) return xi;
  for (int k = 0; k < 6; ++k) {
    if (ev[k] <= kNullRatio * top) continue;
    const Vec6 v = es.eigenvectors().col(k);
    xi -= (v.dot(g) / (ev[k] + kDamping * top)) * v;
  }
  xi.head<3>() /= spread;
  return xi;
}

// Apply a centred update: rotate about `center`, then translate.
Pose apply_update(const Pose& pose, const Vec6& xi, const Eigen::Vector3d& center, double alpha) {
  Vec6 scaled = alpha * xi;
  const Pose step = Pose::exp(scaled);
  Pose out;
  out.rotation = step.rotation * pose.rotation;
  out.translation = step.rotation * (pose.translation - center) + center + step.translation;
  return out;
}

// Weighted sum of squared point-to-plane residuals of one pair set, both
// directions, and the matching weight total.
void pair_energy(const ObjectCloud& ci, const Pose& pi, const ObjectCloud& cj, const Pose& pj,
                 const std::vector<Correspondence>& pairs, double& sum, double& wsum) {
  for (const auto& c : pairs) {
    const Eigen::Vector3d xa = pi * ci.points[static_cast<std::size_t>(c.a)];
    const Eigen::Vector3d xb = pj * cj.points[static_cast<std::size_t>(c.b)];
    const double rab = pj.rotate(cj.normals[static_cast<std::size_t>(c.b)]).dot(xa - xb);
    const double rba = pi.rotate(ci.normals[static_cast<std::size_t>(c.a)]).dot(xb - xa);
    sum += c.weight * (rab * rab + rba * rba);
    wsum += 2.0 * c.weight;
  }
}

double energy(const std::vector<RefinementView>& nodes, const std::vector<ViewEdge>& edges, const std::vector<Pose>& poses,
              double* wsum_out = nullptr) {
  double sum = 0.0, wsum = 0.0;
  for (const auto& e : edges)
    pair_energy(nodes[static_cast<std::size_t>(e.i)].cloud, poses[static_cast<std::size_t>(e.i)],
                nodes[static_cast<std::size_t>(e.j)].cloud, poses[static_cast<std::size_t>(e.j)], e.pairs, sum, wsum);
  if (wsum_out) *wsum_out = wsum;
  return sum;
}

double rms_of(double sum, double wsum) { return wsum > 0.0 ? std::sqrt(sum / wsum) : 0.0; }

constexpr int kMaxHalvings = 8;

}  // namespace

void IcpConfig::validate() const {
  if (iterations < 1) throw InvalidInput("refinement.iterations must be positive");
  if (!(convergence_eps > 0.0)) throw InvalidInput("refinement.convergence_eps must be positive");
  if (!(gate_start_m > 0.0) || !(gate_floor_m > 0.0) || gate_floor_m > gate_start_m)
    throw InvalidInput("refinement gate: need 0 < floor <= start");
  if (!(gate_factor > 0.0 && gate_factor <= 1.0)) throw InvalidInput("refinement.gate_factor must be in (0, 1]");
  if (gate_every < 1) throw InvalidInput("refinement.gate_every must be positive");
  if (!(normal_reject_deg > 0.0 && normal_reject_deg <= 180.0))
    throw InvalidInput("refinement.normal_reject_deg must be in (0, 180]");
  if (!(overlap_min >= 0.0 && overlap_min <= 1.0)) throw InvalidInput("refinement.overlap_min must be in [0, 1]");
  if (!(overlap_distance_m > 0.0)) throw InvalidInput("refinement.overlap_distance_m must be positive");
  if (min_pairs < 3) throw InvalidInput("refinement.min_pairs must be at least 3");
  if (max_points < 3) throw InvalidInput("refinement.max_points must be at least 3");
  if (!(min_weight >= 0.0 && min_weight < 1.0)) throw InvalidInput("refinement.min_weight must be in [0, 1)");
}

double IcpConfig::gate(int stage) const {
  return std::max(gate_floor_m, gate_start_m * std::pow(gate_factor, stage));
}

std::vector<RefinementView> make_refinement_views(const std::vector<Keyframe>& keyframes,
                                                  const CameraIntrinsics& intrinsics, const IcpConfig& config,
                                                  const NoiseModelParams& noise) {
  config.validate();
  std::vector<RefinementView> views;
  for (const auto& kf : keyframes) {
    if (kf.object_indices.empty()) continue;
    const WeightedView wv = weighted_view(kf, intrinsics, noise);
    std::vector<std::int32_t> keep;
    for (std::size_t i = 0; i < wv.cloud.size(); ++i)
      if (wv.cloud.normal_valid[i] && wv.cloud.weights[i] > config.min_weight) keep.push_back(static_cast<std::int32_t>(i));
    const std::size_t stride = std::max<std::size_t>(
        1, (keep.size() + static_cast<std::size_t>(config.max_points) - 1) / static_cast<std::size_t>(config.max_points));
    std::vector<std::int32_t> sampled;
    for (std::size_t k = 0; k < keep.size(); k += stride) sampled.push_back(keep[k]);
    RefinementView v;
    v.id = kf.frame.frame_id;
    v.pose = kf.pose;
    v.cloud = extract(wv.cloud, sampled);
    views.push_back(std::move(v));
  }
  return views;
}

double view_overlap(const RefinementView& from, const RefinementView& to, double distance) {
  if (from.cloud.empty()) return 0.0;
  const NeighborIndex index = camera_index(to.cloud);
  const Pose rel = to.pose.inverse() * from.pose;
  std::size_t hits = 0;
  for (const auto& p : from.cloud.points)
    if (index.nearest(rel * p, distance * distance)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(from.cloud.size());
}

ViewGraph build_view_graph(std::vector<RefinementView> views, const IcpConfig& config) {
  config.validate();
  if (views.empty()) throw StageError("refinement: no views with object points");
  ViewGraph g;
  g.nodes = std::move(views);
  const std::size_t n = g.nodes.size();
  std::vector<NeighborIndex> index;
  index.reserve(n);
  for (const auto& v : g.nodes) index.push_back(camera_index(v.cloud));

  const auto overlap = [&](std::size_t a, std::size_t b) {
    if (g.nodes[a].cloud.empty()) return 0.0;
    const Pose rel = g.nodes[b].pose.inverse() * g.nodes[a].pose;
    const double sq = config.overlap_distance_m * config.overlap_distance_m;
    std::size_t hits = 0;
    for (const auto& p : g.nodes[a].cloud.points)
      if (index[b].nearest(rel * p, sq)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(g.nodes[a].cloud.size());
  };

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  std::vector<ViewEdge> candidates(pairs.size());
  const auto np = static_cast<std::int64_t>(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < np; ++k) {
    const auto [i, j] = pairs[static_cast<std::size_t>(k)];
    auto& e = candidates[static_cast<std::size_t>(k)];
    e.i = static_cast<int>(i);
    e.j = static_cast<int>(j);
    e.overlap_ij = overlap(i, j);
    e.overlap_ji = overlap(j, i);
  }
  for (auto& e : candidates)
    if (std::min(e.overlap_ij, e.overlap_ji) >= config.overlap_min) g.edges.push_back(std::move(e));

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : g.edges) parent[find(static_cast<std::size_t>(e.i))] = find(static_cast<std::size_t>(e.j));
  std::map<std::size_t, std::vector<std::int64_t>> components;
  for (std::size_t i = 0; i < n; ++i) components[find(i)].push_back(g.nodes[i].id);
  if (components.size() > 1) {
    std::vector<std::vector<std::int64_t>> sorted;
    for (auto& [root, ids] : components) sorted.push_back(ids);
    std::sort(sorted.begin(), sorted.end());
    std::ostringstream msg;
    msg << "refinement: view graph is disconnected (" << sorted.size() << " components:";
    for (const auto& comp : sorted) {
      msg << " {";
      for (std::size_t k = 0; k < comp.size(); ++k) msg << (k ? "," : "") << comp[k];
      msg << "}";
    }
    msg << ")";
    throw StageError(msg.str());
  }
  return g;
}

double graph_rms(const ViewGraph& graph) {
  std::vector<Pose> poses;
  for (const auto& v : graph.nodes) poses.push_back(v.pose);
  double wsum = 0.0;
  const double sum = energy(graph.nodes, graph.edges, poses, &wsum);
  return rms_of(sum, wsum);
}

IcpResult multiview_icp(ViewGraph& graph, const IcpConfig& config) {
  config.validate();
  const std::size_t n = graph.nodes.size();
  const double cos_normal = std::cos(config.normal_reject_deg * kDeg);
  std::vector<NeighborIndex> index;
  index.reserve(n);
  for (const auto& v : graph.nodes) index.push_back(camera_index(v.cloud));

  IcpResult result;
  std::vector<Pose> poses;
  for (const auto& v : graph.nodes) poses.push_back(v.pose);
  int stage = 0;
  int in_stage = 0;
  std::vector<int> frozen_now;

  for (int it = 0; it < config.iterations; ++it) {
    const double gate = config.gate(stage);
    const auto ne = static_cast<std::int64_t>(graph.edges.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t k = 0; k < ne; ++k) {
      auto& e = graph.edges[static_cast<std::size_t>(k)];
      const auto i = static_cast<std::size_t>(e.i), j = static_cast<std::size_t>(e.j);
      e.pairs = match(graph.nodes[i].cloud, poses[i], index[i], graph.nodes[j].cloud, poses[j], index[j], gate, cos_normal);
    }

    // per-node systems
    std::vector<std::vector<Term>> terms(n);
    std::vector<std::size_t> best_edge(n, 0);
    std::size_t total_pairs = 0;
    for (const auto& e : graph.edges) {
      const auto i = static_cast<std::size_t>(e.i), j = static_cast<std::size_t>(e.j);
      const auto& ci = graph.nodes[i].cloud;
      const auto& cj = graph.nodes[j].cloud;
      total_pairs += e.pairs.size();
      best_edge[i] = std::max(best_edge[i], e.pairs.size());
      best_edge[j] = std::max(best_edge[j], e.pairs.size());
      for (const auto& c : e.pairs) {
        const Eigen::Vector3d xa = poses[i] * ci.points[static_cast<std::size_t>(c.a)];
        const Eigen::Vector3d xb = poses[j] * cj.points[static_cast<std::size_t>(c.b)];
        const Eigen::Vector3d na = poses[i].rotate(ci.normals[static_cast<std::size_t>(c.a)]);
        const Eigen::Vector3d nb = poses[j].rotate(cj.normals[static_cast<std::size_t>(c.b)]);
        terms[i].push_back({xa, xb, nb, c.weight});
        terms[j].push_back({xb, xa, na, c.weight});
      }
    }
    frozen_now.clear();
    std::vector<Vec6> xi(n, Vec6::Zero());
    std::vector<Eigen::Vector3d> center(n, Eigen::Vector3d::Zero());
    for (std::size_t v = 1; v < n; ++v) {
      if (best_edge[v] < static_cast<std::size_t>(config.min_pairs)) {
        frozen_now.push_back(static_cast<int>(v));
        result.warnings.push_back("iteration " + std::to_string(it) + ": view " + std::to_string(graph.nodes[v].id) +
                                  " frozen (fewer than " + std::to_string(config.min_pairs) + " pairs on every edge)");
        continue;
      }
      xi[v] = solve_terms(terms[v], center[v]);
    }

    double wsum = 0.0;
    const double e0 = energy(graph.nodes, graph.edges, poses, &wsum);
    IcpIteration log;
    log.iteration = it;
    log.gate_m = gate;
    log.pairs = total_pairs;
    log.rms_before = rms_of(e0, wsum);
    log.rms_after = log.rms_before;

    double alpha = 1.0;
    std::vector<Pose> trial(poses.size());
    bool accepted = false;
    for (int h = 0; h <= kMaxHalvings; ++h, alpha *= 0.5) {
      for (std::size_t v = 0; v < n; ++v) trial[v] = v == 0 ? poses[0] : apply_update(poses[v], xi[v], center[v], alpha);
      const double e1 = energy(graph.nodes, graph.edges, trial);
      if (e1 <= e0) {
        accepted = true;
        log.rms_after = rms_of(e1, wsum);
        break;
      }
    }
    double largest = 0.0;
    if (accepted) {
      log.step = alpha;
      for (std::size_t v = 1; v < n; ++v) largest = std::max(largest, alpha * xi[v].cwiseAbs().maxCoeff());
      poses.swap(trial);
    }
    result.log.push_back(log);

    const bool still = !accepted || largest < config.convergence_eps;
    const bool at_floor = config.gate(stage) <= config.gate_floor_m;
    if (still && at_floor) {
      result.converged = true;
      break;
    }
    ++in_stage;
    if (in_stage >= config.gate_every || still) {
      ++stage;
      in_stage = 0;
    }
  }

  for (std::size_t v = 1; v < n; ++v) graph.nodes[v].pose = poses[v];
  result.poses = poses;
  result.frozen = frozen_now;
  return result;
}

PairwiseIcpResult pairwise_icp(const ObjectCloud& source, const ObjectCloud& target, const Pose& initial,
                               const IcpConfig& config) {
  config.validate();
  if (!source.has_normals() || !target.has_normals()) throw InvalidInput("pairwise_icp: clouds need normals");
  const double cos_normal = std::cos(config.normal_reject_deg * kDeg);
  const NeighborIndex src_index(source.points);
  const NeighborIndex dst_index(target.points);
  PairwiseIcpResult result;
  Pose t = initial;
  int stage = 0, in_stage = 0;

  const auto pair_set = [&](const Pose& pose, double gate) {
    // target first so pair sets coincide with a graph whose node 0 is the target
    return match(target, Pose::identity(), dst_index, source, pose, src_index, gate, cos_normal);
  };
  const auto sum_of = [&](const Pose& pose, const std::vector<Correspondence>& pairs, double& wsum) {
    double sum = 0.0;
    wsum = 0.0;
    pair_energy(target, Pose::identity(), source, pose, pairs, sum, wsum);
    return sum;
  };

  for (int it = 0; it < config.iterations; ++it) {
    const double gate = config.gate(stage);
    const auto pairs = pair_set(t, gate);
    result.pairs = pairs.size();
    IcpIteration log;
    log.iteration = it;
    log.gate_m = gate;
    log.pairs = pairs.size();
    double wsum = 0.0;
    const double e0 = sum_of(t, pairs, wsum);
    log.rms_before = log.rms_after = rms_of(e0, wsum);

    bool accepted = false;
    double largest = 0.0;
    if (pairs.size() >= static_cast<std::size_t>(config.min_pairs)) {
      std::vector<Term> terms;
      terms.reserve(pairs.size());
      for (const auto& c : pairs)
        terms.push_back({t * source.points[static_cast<std::size_t>(c.b)], target.points[static_cast<std::size_t>(c.a)],
                         target.normals[static_cast<std::size_t>(c.a)], c.weight});
      Eigen::Vector3d center;
      const Vec6 xi = solve_terms(terms, center);
      double alpha = 1.0;
      for (int h = 0; h <= kMaxHalvings; ++h, alpha *= 0.5) {
        const Pose trial = apply_update(t, xi, center, alpha);
        double w1 = 0.0;
        const double e1 = sum_of(trial, pairs, w1);
        if (e1 <= e0) {
          accepted = true;
          log.rms_after = rms_of(e1, w1);
          log.step = alpha;
          largest = alpha * xi.cwiseAbs().maxCoeff();
          t = trial;
          break;
        }
      }
    }
    result.log.push_back(log);
    const bool still = !accepted || largest < config.convergence_eps;
    if (still && config.gate(stage) <= config.gate_floor_m) {
      result.converged = true;
      break;
    }
    ++in_stage;
    if (in_stage >= config.gate_every || still) {
      ++stage;
      in_stage = 0;
    }
  }
  result.transform = t;
  return result;
}

}  // namespace objmodel
