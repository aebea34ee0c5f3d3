#include "objmodel/multisession.hpp"

#include "objmodel/error.hpp"
#include "objmodel/io.hpp"
#include "objmodel/neighbor_index.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace objmodel {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr int kBins = 11;
using Descriptor = std::array<double, 3 * kBins>;

// Valid points with valid normals only; everything downstream relies on it.
ObjectCloud usable(const ObjectCloud& cloud) {
  std::vector<std::int32_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.valid[i] && cloud.normal_valid[i]) keep.push_back(static_cast<std::int32_t>(i));
  return extract(cloud, keep);
}

ObjectCloud thin(const ObjectCloud& cloud, int max_points) {
  if (max_points <= 0 || cloud.size() <= static_cast<std::size_t>(max_points)) return cloud;
  const std::size_t stride = (cloud.size() + static_cast<std::size_t>(max_points) - 1) / static_cast<std::size_t>(max_points);
  std::vector<std::int32_t> keep;
  for (std::size_t i = 0; i < cloud.size(); i += stride) keep.push_back(static_cast<std::int32_t>(i));
  return extract(cloud, keep);
}

std::uint64_t cloud_key(const ObjectCloud& cloud) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : cloud.points)
    for (int a = 0; a < 3; ++a) {
      const auto q = static_cast<std::int64_t>(std::llround(p[a] * 1e6));
      h = (h ^ static_cast<std::uint64_t>(q)) * 1099511628211ull;
    }
  return h;
}

Eigen::Vector3d centroid(const ObjectCloud& cloud) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : cloud.points) c += p;
  return cloud.size() > 0 ? Eigen::Vector3d(c / static_cast<double>(cloud.size())) : c;
}

double fsv_with_index(const ObjectCloud& source, const ObjectCloud& target, const NeighborIndex& index,
                      const Pose& transform, const MultisessionConfig& cfg) {
  std::size_t on = 0, front = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (!source.valid[i]) continue;
    const Eigen::Vector3d x = transform * source.points[i];
    const auto hit = index.nearest(x);
    if (!hit) continue;
    const auto h = static_cast<std::size_t>(hit->index);
    if (!target.normal_valid[h]) continue;
    const Eigen::Vector3d d = x - target.points[h];
    const double offset = target.normals[h].dot(d);
    if ((d - offset * target.normals[h]).norm() > cfg.assoc_distance_m) continue;
    if (std::abs(offset) <= cfg.surface_epsilon_m)
      ++on;
    else if (offset > cfg.surface_epsilon_m)
      ++front;
  }
  if (on == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(front) / static_cast<double>(on);
}

std::size_t covered(const ObjectCloud& from, const Pose& transform, const NeighborIndex& to, double distance) {
  std::size_t n = 0;
  const double sq = distance * distance;
  for (std::size_t i = 0; i < from.size(); ++i)
    if (from.valid[i] && to.nearest(transform * from.points[i], sq)) ++n;
  return n;
}

std::size_t valid_count(const ObjectCloud& c) {
  return static_cast<std::size_t>(std::count(c.valid.begin(), c.valid.end(), std::uint8_t{1}));
}

// Scoring context with both neighbour indices built once.
struct Pair {
  const ObjectCloud& source;
  const ObjectCloud& target;
  NeighborIndex source_index;
  NeighborIndex target_index;
  Pair(const ObjectCloud& s, const ObjectCloud& t) : source(s), target(t), source_index(s.points), target_index(t.points) {}

  void score(RegistrationCandidate& c, const MultisessionConfig& cfg) const {
    const double a = fsv_with_index(source, target, target_index, c.transform, cfg);
    const double b = fsv_with_index(target, source, source_index, c.transform.inverse(), cfg);
    c.fsv_ratio = std::max(a, b);
    const std::size_t ns = valid_count(source), nt = valid_count(target);
    if (ns == 0 || nt == 0) {
      c.overlap_ratio = 0.0;
    } else if (ns <= nt) {
      c.overlap_ratio = static_cast<double>(covered(source, c.transform, target_index, cfg.assoc_distance_m)) / ns;
    } else {
      c.overlap_ratio =
          static_cast<double>(covered(target, c.transform.inverse(), source_index, cfg.assoc_distance_m)) / nt;
    }
    c.quality = candidate_quality(c.fsv_ratio, c.overlap_ratio, cfg);
  }

  void refine(RegistrationCandidate& c, const MultisessionConfig& cfg) const {
    if (source.size() >= 3 && target.size() >= 3) c.transform = pairwise_icp(source, target, c.transform, cfg.icp).transform;
    score(c, cfg);
  }
};

// --- stable planes --------------------------------------------------------

// 2D convex hull (monotone chain), counter-clockwise.
std::vector<Eigen::Vector2d> hull_2d(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
  if (pts.size() < 3) return pts;
  const auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a - o).x() * (b - o).y() - (a - o).y() * (b - o).x();
  };
  std::vector<Eigen::Vector2d> h(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p) <= 0.0) --k;
    h[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(h[k - 2], h[k - 1], pts[i]) <= 0.0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

bool inside_polygon(const std::vector<Eigen::Vector2d>& poly, const Eigen::Vector2d& p) {
  if (poly.size() < 3) return false;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Eigen::Vector2d& a = poly[i];
    const Eigen::Vector2d& b = poly[(i + 1) % poly.size()];
    if ((b - a).x() * (p - a).y() - (b - a).y() * (p - a).x() < 0.0) return false;
  }
  return true;
}

// --- shape descriptors ----------------------------------------------------

struct Sampled {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;
};

// One representative per voxel: the member closest to the voxel's mean.
std::vector<std::size_t> voxel_pick(const std::vector<Eigen::Vector3d>& pts, double voxel) {
  std::map<std::array<std::int64_t, 3>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::array<std::int64_t, 3> key{static_cast<std::int64_t>(std::floor(pts[i].x() / voxel)),
                                          static_cast<std::int64_t>(std::floor(pts[i].y() / voxel)),
                                          static_cast<std::int64_t>(std::floor(pts[i].z() / voxel))};
    cells[key].push_back(i);
  }
  std::vector<std::size_t> out;
  out.reserve(cells.size());
  for (const auto& [key, members] : cells) {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto m : members) mean += pts[m];
    mean /= static_cast<double>(members.size());
    std::size_t best = members.front();
    for (const auto m : members)
      if ((pts[m] - mean).squaredNorm() < (pts[best] - mean).squaredNorm()) best = m;
    out.push_back(best);
  }
  return out;
}

bool pair_feature(const Eigen::Vector3d& p1, const Eigen::Vector3d& n1, const Eigen::Vector3d& p2,
                  const Eigen::Vector3d& n2, double& f1, double& f2, double& f3) {
  Eigen::Vector3d d = p2 - p1;
  const double len = d.norm();
  if (len <= 0.0) return false;
  Eigen::Vector3d u = n1, other = n2;
  const double a1 = n1.dot(d) / len, a2 = n2.dot(d) / len;
  if (std::acos(std::clamp(std::abs(a1), 0.0, 1.0)) > std::acos(std::clamp(std::abs(a2), 0.0, 1.0))) {
    u = n2;
    other = n1;
    d = -d;
    f3 = -a2;
  } else {
    f3 = a1;
  }
  Eigen::Vector3d v = d.cross(u);
  const double vn = v.norm();
  if (vn <= 0.0) return false;
  v /= vn;
  const Eigen::Vector3d w = u.cross(v);
  f2 = v.dot(other);
  f1 = std::atan2(w.dot(other), u.dot(other));
  return true;
}

int bin_of(double value, double lo, double hi) {
  const int b = static_cast<int>(std::floor((value - lo) / (hi - lo) * kBins));
  return std::clamp(b, 0, kBins - 1);
}

void normalize_descriptor(Descriptor& d) {
  for (int s = 0; s < 3; ++s) {
    double sum = 0.0;
    for (int b = 0; b < kBins; ++b) sum += d[static_cast<std::size_t>(s * kBins + b)];
    if (sum > 0.0)
      for (int b = 0; b < kBins; ++b) d[static_cast<std::size_t>(s * kBins + b)] *= 100.0 / sum;
  }
}

struct Keypoints {
  std::vector<Eigen::Vector3d> points;
  std::vector<Descriptor> descriptors;
};

// Fast point feature histograms on a voxel-thinned copy, kept at keypoints
// spaced keypoint_spacing_m apart.
Keypoints describe(const ObjectCloud& cloud, const MultisessionConfig& cfg) {
  Sampled base;
  for (const auto i : voxel_pick(cloud.points, cfg.descriptor_voxel_m)) {
    base.points.push_back(cloud.points[i]);
    base.normals.push_back(cloud.normals[i]);
  }
  const NeighborIndex index(base.points);
  std::vector<std::vector<NeighborIndex::Hit>> neighbors(base.points.size());
  std::vector<Descriptor> spfh(base.points.size());
  for (std::size_t i = 0; i < base.points.size(); ++i) {
    neighbors[i] = index.radius(base.points[i], cfg.descriptor_radius_m);
    Descriptor h{};
    for (const auto& hit : neighbors[i]) {
      const auto j = static_cast<std::size_t>(hit.index);
      if (j == i) continue;
      double f1, f2, f3;
      if (!pair_feature(base.points[i], base.normals[i], base.points[j], base.normals[j], f1, f2, f3)) continue;
      h[static_cast<std::size_t>(bin_of(f1, -std::numbers::pi, std::numbers::pi))] += 1.0;
      h[static_cast<std::size_t>(kBins + bin_of(f2, -1.0, 1.0))] += 1.0;
      h[static_cast<std::size_t>(2 * kBins + bin_of(f3, -1.0, 1.0))] += 1.0;
    }
    normalize_descriptor(h);
    spfh[i] = h;
  }
  Keypoints out;
  for (const auto k : voxel_pick(base.points, cfg.keypoint_spacing_m)) {
    if (neighbors[k].size() < 6) continue;
    Descriptor d = spfh[k];
    double norm = 0.0;
    for (const auto& hit : neighbors[k]) {
      const auto j = static_cast<std::size_t>(hit.index);
      if (j == k || hit.sq_distance <= 0.0) continue;
      const double w = 1.0 / std::sqrt(hit.sq_distance);
      for (std::size_t b = 0; b < d.size(); ++b) d[b] += w * spfh[j][b] / static_cast<double>(neighbors[k].size() - 1);
      norm += w;
    }
    if (norm <= 0.0) continue;
    normalize_descriptor(d);
    out.points.push_back(base.points[k]);
    out.descriptors.push_back(d);
  }
  return out;
}

double descriptor_distance(const Descriptor& a, const Descriptor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

bool same_transform(const Pose& a, const Pose& b) {
  return translation_distance(a, b) < 0.002 && rotation_distance(a, b) < 1.0 * kDeg;
}

bool better(const RegistrationCandidate& a, const RegistrationCandidate& b) { return a.quality > b.quality; }

RegistrationCandidate pick_best(std::vector<RegistrationCandidate> candidates, const ObjectCloud& source,
                                const ObjectCloud& target, const MultisessionConfig& cfg) {
  RegistrationCandidate none;
  none.quality = 0.0;
  if (candidates.empty()) return none;
  {
    const ObjectCloud s = thin(source, cfg.coarse_points);
    const ObjectCloud t = thin(target, cfg.coarse_points);
    const Pair coarse(s, t);
    for (auto& c : candidates) coarse.refine(c, cfg);
  }
  std::stable_sort(candidates.begin(), candidates.end(), better);
  const Pair full(source, target);
  std::vector<RegistrationCandidate> finalists;
  for (const auto& c : candidates) {
    if (static_cast<int>(finalists.size()) >= cfg.refine_best) break;
    if (c.quality <= 0.0) break;
    if (std::any_of(finalists.begin(), finalists.end(), [&](const auto& f) { return same_transform(f.transform, c.transform); }))
      continue;
    finalists.push_back(c);
  }
  if (finalists.empty()) return candidates.front();
  for (auto& c : finalists) full.refine(c, cfg);
  std::stable_sort(finalists.begin(), finalists.end(), better);
  return finalists.front();
}

std::vector<RegistrationCandidate> generate(const ObjectCloud& source, const ObjectCloud& target,
                                            const MultisessionConfig& cfg, bool use_features, bool use_planes) {
  std::vector<RegistrationCandidate> all;
  if (use_planes) {
    auto p = candidates_from_stable_planes(source, target, cfg);
    all.insert(all.end(), p.begin(), p.end());
  }
  if (use_features) {
    auto f = candidates_from_features(source, target, cfg);
    all.insert(all.end(), f.begin(), f.end());
  }
  return all;
}

std::string format_pose(const Pose& p) {
  const Eigen::Quaterniond q = p.quaternion();
  std::ostringstream os;
  os << io::format_number(p.translation.x()) << ' ' << io::format_number(p.translation.y()) << ' '
     << io::format_number(p.translation.z()) << ' ' << io::format_number(q.x()) << ' ' << io::format_number(q.y()) << ' '
     << io::format_number(q.z()) << ' ' << io::format_number(q.w());
  return os.str();
}

}  // namespace

const char* origin_name(CandidateOrigin origin) {
  switch (origin) {
    case CandidateOrigin::feature: return "feature";
    case CandidateOrigin::stable_plane: return "stable-plane";
    case CandidateOrigin::given: return "given";
  }
  return "given";
}

IcpConfig MultisessionConfig::default_icp() {
  IcpConfig c;
  c.gate_start_m = 0.03;
  c.iterations = 40;
  return c;
}

void MultisessionConfig::validate() const {
  if (!(assoc_distance_m > 0.0)) throw InvalidInput("multisession.assoc_distance_m must be positive");
  if (!(surface_epsilon_m > 0.0)) throw InvalidInput("multisession.surface_epsilon_m must be positive");
  if (!(fsv_scale > 0.0)) throw InvalidInput("multisession.fsv_scale must be positive");
  if (!(overlap_floor >= 0.0 && overlap_floor <= 1.0)) throw InvalidInput("multisession.overlap_floor must be in [0,1]");
  if (yaw_samples < 1) throw InvalidInput("multisession.yaw_samples must be >= 1");
  if (!(min_face_fraction > 0.0 && min_face_fraction < 1.0))
    throw InvalidInput("multisession.min_face_fraction must be in (0,1)");
  if (!(face_merge_deg > 0.0 && face_merge_deg < 90.0)) throw InvalidInput("multisession.face_merge_deg must be in (0,90)");
  if (!(face_merge_m > 0.0)) throw InvalidInput("multisession.face_merge_m must be positive");
  if (hull_points < 4) throw InvalidInput("multisession.hull_points must be >= 4");
  if (!(keypoint_spacing_m > 0.0) || !(descriptor_voxel_m > 0.0) || !(descriptor_radius_m > 0.0))
    throw InvalidInput("multisession: descriptor spacings must be positive");
  if (!(ratio_test > 0.0 && ratio_test <= 1.0)) throw InvalidInput("multisession.ratio_test must be in (0,1]");
  if (!(consensus_m > 0.0)) throw InvalidInput("multisession.consensus_m must be positive");
  if (ransac_iterations < 1) throw InvalidInput("multisession.ransac_iterations must be >= 1");
  if (min_consensus < 3) throw InvalidInput("multisession.min_consensus must be >= 3");
  if (max_candidates < 1) throw InvalidInput("multisession.max_candidates must be >= 1");
  if (coarse_points < 0) throw InvalidInput("multisession.coarse_points must be >= 0");
  if (refine_best < 1) throw InvalidInput("multisession.refine_best must be >= 1");
  icp.validate();
}

std::vector<StablePlane> stable_planes(const ObjectCloud& cloud, const MultisessionConfig& cfg) {
  cfg.validate();
  std::vector<Eigen::Vector3d> pts;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.valid[i]) pts.push_back(cloud.points[i]);
  if (pts.size() > static_cast<std::size_t>(cfg.hull_points)) {
    const std::size_t stride = (pts.size() + static_cast<std::size_t>(cfg.hull_points) - 1) / static_cast<std::size_t>(cfg.hull_points);
    std::vector<Eigen::Vector3d> kept;
    for (std::size_t i = 0; i < pts.size(); i += stride) kept.push_back(pts[i]);
    pts.swap(kept);
  }
  const TriangleMesh hull = convex_hull(pts);
  const double total = hull.total_area();
  if (!(total > 0.0)) throw EstimationError("stable_planes: hull has no area");

  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());

  std::vector<std::size_t> order(hull.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return hull.area(a) > hull.area(b); });
  std::vector<std::uint8_t> taken(hull.size(), 0);
  const double cos_merge = std::cos(cfg.face_merge_deg * kDeg);

  std::vector<StablePlane> out;
  for (const auto seed : order) {
    if (taken[seed]) continue;
    const Eigen::Vector3d n0 = hull.face_normal(seed);
    const double d0 = n0.dot(hull.corner(seed, 0));
    Eigen::Vector3d nsum = Eigen::Vector3d::Zero();
    double area = 0.0;
    std::vector<std::size_t> members;
    for (const auto t : order) {
      if (taken[t]) continue;
      const Eigen::Vector3d n = hull.face_normal(t);
      const Eigen::Vector3d mid = (hull.corner(t, 0) + hull.corner(t, 1) + hull.corner(t, 2)) / 3.0;
      if (n.dot(n0) < cos_merge || std::abs(n0.dot(mid) - d0) > cfg.face_merge_m) continue;
      taken[t] = 1;
      members.push_back(t);
      nsum += hull.area(t) * n;
      area += hull.area(t);
    }
    if (area < cfg.min_face_fraction * total || nsum.norm() <= 0.0) continue;
    StablePlane plane;
    plane.normal = nsum.normalized();
    plane.area = area;
    plane.offset = -std::numeric_limits<double>::infinity();
    for (const auto& p : pts) plane.offset = std::max(plane.offset, plane.normal.dot(p));

    // centroid must fall inside the face (outline of its projected corners)
    const Eigen::Vector3d e1 = plane.normal.unitOrthogonal();
    const Eigen::Vector3d e2 = plane.normal.cross(e1);
    std::vector<Eigen::Vector2d> flat;
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    for (const auto t : members)
      for (int k = 0; k < 3; ++k) {
        const Eigen::Vector3d& v = hull.corner(t, k);
        flat.emplace_back(e1.dot(v), e2.dot(v));
        center += v;
      }
    center /= static_cast<double>(3 * members.size());
    if (!inside_polygon(hull_2d(flat), Eigen::Vector2d(e1.dot(c), e2.dot(c)))) continue;
    plane.center = center - (plane.normal.dot(center) - plane.offset) * plane.normal;
    out.push_back(plane);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.area > b.area; });
  return out;
}

std::vector<RegistrationCandidate> candidates_from_stable_planes(const ObjectCloud& source_in,
                                                                 const ObjectCloud& target_in,
                                                                 const MultisessionConfig& cfg) {
  cfg.validate();
  std::vector<StablePlane> ps, pt;
  try {
    ps = stable_planes(source_in, cfg);
    pt = stable_planes(target_in, cfg);
  } catch (const EstimationError&) {
    return {};
  }
  const ObjectCloud source = usable(source_in), target = usable(target_in);
  const Eigen::Vector3d cs = centroid(source), ct = centroid(target);
  std::vector<RegistrationCandidate> out;
  for (const auto& a : ps)
    for (const auto& b : pt) {
      const Eigen::Matrix3d r0 = Eigen::Quaterniond::FromTwoVectors(a.normal, b.normal).toRotationMatrix();
      for (int k = 0; k < cfg.yaw_samples; ++k) {
        const double yaw = 2.0 * std::numbers::pi * k / cfg.yaw_samples;
        const Eigen::Matrix3d r = Eigen::AngleAxisd(yaw, b.normal).toRotationMatrix() * r0;
        const Eigen::Vector3d moved = r * cs;
        const Eigen::Vector3d shift = ct - moved;
        RegistrationCandidate c;
        c.origin = CandidateOrigin::stable_plane;
        c.transform.rotation = r;
        // in-plane: centroids meet; along the normal: the planes coincide
        c.transform.translation = shift - b.normal.dot(shift) * b.normal + (b.offset - a.offset) * b.normal;
        out.push_back(c);
      }
    }
  return out;
}

std::vector<RegistrationCandidate> candidates_from_features(const ObjectCloud& source_in, const ObjectCloud& target_in,
                                                            const MultisessionConfig& cfg) {
  cfg.validate();
  const ObjectCloud source = usable(source_in), target = usable(target_in);
  if (source.size() < 3 || target.size() < 3) return {};
  const Keypoints ks = describe(source, cfg);
  const Keypoints kt = describe(target, cfg);
  if (ks.points.size() < 3 || kt.points.size() < 2) return {};

  std::vector<Eigen::Vector3d> src, dst;
  for (std::size_t i = 0; i < ks.points.size(); ++i) {
    double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
    std::size_t best = 0;
    for (std::size_t j = 0; j < kt.points.size(); ++j) {
      const double d = descriptor_distance(ks.descriptors[i], kt.descriptors[j]);
      if (d < d1) {
        d2 = d1;
        d1 = d;
        best = j;
      } else if (d < d2) {
        d2 = d;
      }
    }
    if (d1 < cfg.ratio_test * d2) {
      src.push_back(ks.points[i]);
      dst.push_back(kt.points[best]);
    }
  }

  std::mt19937_64 rng(cfg.seed ^ cloud_key(source) ^ (cloud_key(target) << 1));
  std::vector<RegistrationCandidate> out;
  const double tol = cfg.consensus_m;
  while (static_cast<int>(out.size()) < cfg.max_candidates && src.size() >= static_cast<std::size_t>(cfg.min_consensus)) {
    std::uniform_int_distribution<std::size_t> pick(0, src.size() - 1);
    std::vector<std::size_t> best_inliers;
    for (int it = 0; it < cfg.ransac_iterations; ++it) {
      const std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
      if (a == b || b == c || a == c) continue;
      const std::array<std::size_t, 3> s{a, b, c};
      bool ok = true;
      for (int u = 0; u < 3 && ok; ++u) {
        const auto i = s[static_cast<std::size_t>(u)], j = s[static_cast<std::size_t>((u + 1) % 3)];
        const double ls = (src[i] - src[j]).norm(), ld = (dst[i] - dst[j]).norm();
        ok = std::abs(ls - ld) < tol && ls > 2.0 * tol;
      }
      if (!ok) continue;
      const std::vector<Eigen::Vector3d> ms{src[a], src[b], src[c]}, md{dst[a], dst[b], dst[c]};
      Pose t;
      try {
        t = rigid_from_correspondences(ms, md);
      } catch (const EstimationError&) {
        continue;
      }
      std::vector<std::size_t> inliers;
      for (std::size_t k = 0; k < src.size(); ++k)
        if ((t * src[k] - dst[k]).norm() < tol) inliers.push_back(k);
      if (inliers.size() > best_inliers.size()) best_inliers.swap(inliers);
    }
    if (best_inliers.size() < static_cast<std::size_t>(cfg.min_consensus)) break;
    std::vector<Eigen::Vector3d> ms, md;
    for (const auto k : best_inliers) {
      ms.push_back(src[k]);
      md.push_back(dst[k]);
    }
    RegistrationCandidate cand;
    cand.origin = CandidateOrigin::feature;
    cand.transform = rigid_from_correspondences(ms, md);
    out.push_back(cand);
    std::vector<std::uint8_t> drop(src.size(), 0);
    for (const auto k : best_inliers) drop[k] = 1;
    std::vector<Eigen::Vector3d> ns, nd;
    for (std::size_t k = 0; k < src.size(); ++k)
      if (!drop[k]) {
        ns.push_back(src[k]);
        nd.push_back(dst[k]);
      }
    src.swap(ns);
    dst.swap(nd);
  }
  return out;
}

double fsv_ratio(const ObjectCloud& source, const ObjectCloud& target, const Pose& transform,
                 const MultisessionConfig& cfg) {
  cfg.validate();
  if (!target.has_normals()) throw InvalidInput("fsv_ratio: target cloud has no normals");
  const NeighborIndex index(target.points);
  return fsv_with_index(source, target, index, transform, cfg);
}

double overlap_ratio(const ObjectCloud& source, const ObjectCloud& target, const Pose& transform,
                     const MultisessionConfig& cfg) {
  cfg.validate();
  const std::size_t ns = valid_count(source), nt = valid_count(target);
  if (ns == 0 || nt == 0) return 0.0;
  if (ns <= nt)
    return static_cast<double>(covered(source, transform, NeighborIndex(target.points), cfg.assoc_distance_m)) / ns;
  return static_cast<double>(covered(target, transform.inverse(), NeighborIndex(source.points), cfg.assoc_distance_m)) / nt;
}

double candidate_quality(double fsv, double overlap, const MultisessionConfig& cfg) {
  if (!(overlap >= cfg.overlap_floor) || std::isnan(fsv)) return 0.0;
  return std::clamp(overlap * std::exp(-fsv / cfg.fsv_scale), 0.0, 1.0);
}

RegistrationCandidate score_alignment(RegistrationCandidate candidate, const ObjectCloud& source,
                                      const ObjectCloud& target, const MultisessionConfig& cfg) {
  cfg.validate();
  if (!source.has_normals() || !target.has_normals()) throw InvalidInput("score_alignment: clouds need normals");
  const ObjectCloud s = usable(source), t = usable(target);
  Pair(s, t).score(candidate, cfg);
  return candidate;
}

RegistrationCandidate score_candidate(RegistrationCandidate candidate, const ObjectCloud& source,
                                      const ObjectCloud& target, const MultisessionConfig& cfg) {
  cfg.validate();
  if (!source.has_normals() || !target.has_normals()) throw InvalidInput("score_candidate: clouds need normals");
  const ObjectCloud s = usable(source), t = usable(target);
  Pair(s, t).refine(candidate, cfg);
  return candidate;
}

RegistrationCandidate best_candidate(const ObjectCloud& source_in, const ObjectCloud& target_in,
                                     const MultisessionConfig& cfg, bool use_features, bool use_planes) {
  cfg.validate();
  const ObjectCloud source = usable(source_in), target = usable(target_in);
  return pick_best(generate(source, target, cfg, use_features, use_planes), source, target, cfg);
}

std::vector<std::size_t> maximum_spanning_tree(int vertex_count, const std::vector<RegistrationCandidate>& edges) {
  if (vertex_count < 0) throw InvalidInput("maximum_spanning_tree: negative vertex count");
  std::vector<std::size_t> order;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& c = edges[e];
    if (c.source_session < 0 || c.source_session >= vertex_count || c.target_session < 0 ||
        c.target_session >= vertex_count || c.source_session == c.target_session)
      throw InvalidInput("maximum_spanning_tree: edge endpoints out of range");
    if (c.quality > 0.0) order.push_back(e);
  }
  const auto pair_of = [&](std::size_t e) {
    const auto& c = edges[e];
    return std::make_pair(std::max(c.source_session, c.target_session), std::min(c.source_session, c.target_session));
  };
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    if (edges[a].quality != edges[b].quality) return edges[a].quality > edges[b].quality;
    return pair_of(a) < pair_of(b);
  });
  std::vector<int> parent(static_cast<std::size_t>(vertex_count));
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](int v) {
    while (parent[static_cast<std::size_t>(v)] != v) v = parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
    return v;
  };
  std::vector<std::size_t> tree;
  for (const auto e : order) {
    const int a = find(edges[e].source_session), b = find(edges[e].target_session);
    if (a == b) continue;
    parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    tree.push_back(e);
  }
  return tree;
}

std::vector<Pose> tree_poses(int vertex_count, const std::vector<RegistrationCandidate>& edges,
                             const std::vector<std::size_t>& tree) {
  std::vector<Pose> poses(static_cast<std::size_t>(vertex_count));
  std::vector<std::uint8_t> known(static_cast<std::size_t>(vertex_count), 0);
  if (vertex_count == 0) return poses;
  known[0] = 1;
  std::vector<int> queue{0};
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int v = queue[head];
    for (const auto e : tree) {
      const auto& c = edges[e];
      const auto s = static_cast<std::size_t>(c.source_session), t = static_cast<std::size_t>(c.target_session);
      if (c.target_session == v && !known[s]) {
        poses[s] = poses[t] * c.transform;
        known[s] = 1;
        queue.push_back(c.source_session);
      } else if (c.source_session == v && !known[t]) {
        poses[t] = poses[s] * c.transform.inverse();
        known[t] = 1;
        queue.push_back(c.target_session);
      }
    }
  }
  if (std::find(known.begin(), known.end(), std::uint8_t{0}) != known.end())
    throw StageError("tree_poses: tree does not span all vertices");
  return poses;
}

MergeResult merge_sessions(const std::vector<ObjectCloud>& sessions_in, const MultisessionConfig& cfg) {
  cfg.validate();
  if (sessions_in.size() < 2) throw InvalidInput("merge_sessions: need at least 2 sessions");
  std::vector<ObjectCloud> sessions;
  std::vector<std::uint64_t> keys;
  for (std::size_t i = 0; i < sessions_in.size(); ++i) {
    if (!sessions_in[i].has_normals()) throw InvalidInput("merge_sessions: session " + std::to_string(i) + " has no normals");
    sessions.push_back(usable(sessions_in[i]));
    if (sessions.back().size() < 4)
      throw InvalidInput("merge_sessions: session " + std::to_string(i) + " has fewer than 4 usable points");
    keys.push_back(cloud_key(sessions.back()));
  }
  const int t = static_cast<int>(sessions.size());
  MergeResult result;
  result.graph.vertex_count = t;
  for (int i = 1; i < t; ++i)
    for (int j = 0; j < i; ++j) {
      // the pair is always solved in the same direction, whatever the input order
      const bool forward = keys[static_cast<std::size_t>(i)] > keys[static_cast<std::size_t>(j)] ||
                           (keys[static_cast<std::size_t>(i)] == keys[static_cast<std::size_t>(j)]);
      const auto& s = sessions[static_cast<std::size_t>(forward ? i : j)];
      const auto& d = sessions[static_cast<std::size_t>(forward ? j : i)];
      RegistrationCandidate best = pick_best(generate(s, d, cfg, true, true), s, d, cfg);
      if (!forward) best.transform = best.transform.inverse();
      best.source_session = i;
      best.target_session = j;
      result.graph.edges.push_back(best);
    }
  result.graph.mst_edges = maximum_spanning_tree(t, result.graph.edges);

  std::vector<int> comp(static_cast<std::size_t>(t));
  std::iota(comp.begin(), comp.end(), 0);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto e : result.graph.mst_edges) {
      auto& a = comp[static_cast<std::size_t>(result.graph.edges[e].source_session)];
      auto& b = comp[static_cast<std::size_t>(result.graph.edges[e].target_session)];
      if (a != b) {
        a = b = std::min(a, b);
        changed = true;
      }
    }
  }
  if (static_cast<int>(result.graph.mst_edges.size()) != t - 1) {
    std::map<int, std::vector<int>> groups;
    for (int v = 0; v < t; ++v) groups[comp[static_cast<std::size_t>(v)]].push_back(v);
    std::ostringstream os;
    os << "merge: session graph is disconnected (" << groups.size() << " components:";
    for (const auto& [root, members] : groups) {
      os << " {";
      for (std::size_t k = 0; k < members.size(); ++k) os << (k ? " " : "") << members[k];
      os << "}";
    }
    os << ")";
    throw StageError(os.str());
  }
  result.poses = tree_poses(t, result.graph.edges, result.graph.mst_edges);
  for (int v = 0; v < t; ++v)
    result.model.append(transform_cloud(sessions[static_cast<std::size_t>(v)], result.poses[static_cast<std::size_t>(v)]));
  return result;
}

void write_merge_report(const MergeResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write merge report: " + path.string());
  out << "# sessions " << result.graph.vertex_count << "\n";
  out << "# pair source target origin fsv overlap quality tree\n";
  for (std::size_t e = 0; e < result.graph.edges.size(); ++e) {
    const auto& c = result.graph.edges[e];
    const bool in_tree = std::find(result.graph.mst_edges.begin(), result.graph.mst_edges.end(), e) != result.graph.mst_edges.end();
    out << "pair " << c.source_session << ' ' << c.target_session << ' ' << origin_name(c.origin) << ' '
        << (std::isinf(c.fsv_ratio) ? std::string("inf") : io::format_number(c.fsv_ratio)) << ' '
        << io::format_number(c.overlap_ratio) << ' ' << io::format_number(c.quality) << ' ' << (in_tree ? "yes" : "no") << "\n";
  }
  out << "# pose session tx ty tz qx qy qz qw (session -> session 0)\n";
  for (std::size_t v = 0; v < result.poses.size(); ++v) out << "pose " << v << ' ' << format_pose(result.poses[v]) << "\n";
  if (!out) throw IoError("failed writing merge report: " + path.string());
}

Pose align_for_evaluation(const ObjectCloud& cloud_in, const TriangleMesh& mesh, const MultisessionConfig& cfg) {
  cfg.validate();
  if (!cloud_in.has_normals()) throw InvalidInput("align_for_evaluation: cloud has no normals");
  const ObjectCloud cloud = usable(cloud_in);
  if (cloud.size() < 4) throw InvalidInput("align_for_evaluation: cloud has fewer than 4 usable points");
  const auto count = static_cast<std::size_t>(std::clamp(mesh.total_area() / (0.003 * 0.003), 5000.0, 60000.0));
  const ObjectCloud samples = usable(sample_mesh(mesh, count, cfg.seed));
  auto candidates = generate(cloud, samples, cfg, true, true);
  RegistrationCandidate identity;
  candidates.insert(candidates.begin(), identity);
  const RegistrationCandidate best = pick_best(std::move(candidates), cloud, samples, cfg);
  if (!(best.quality > 0.0))
    throw EstimationError("align_for_evaluation: no alignment reaches the quality floor");
  return best.transform;
}

}  // namespace objmodel
