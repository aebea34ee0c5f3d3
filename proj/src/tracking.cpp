#include "objmodel/tracking.hpp"

#include "objmodel/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

namespace objmodel {

void TrackerConfig::validate() const {
  if (max_features <= 0) throw InvalidInput("tracker.max_features must be positive");
  if (patch < 3 || patch % 2 == 0) throw InvalidInput("tracker.patch must be odd and >= 3");
  if (pyramid_levels < 1 || pyramid_levels > 6) throw InvalidInput("tracker.pyramid_levels must be in [1,6]");
  if (max_iterations < 1) throw InvalidInput("tracker.max_iterations must be positive");
  if (!(convergence_px > 0.0)) throw InvalidInput("tracker.convergence_px must be positive");
  if (!(keyframe_translation_m > 0.0)) throw InvalidInput("tracker.keyframe_translation_m must be positive");
  if (!(keyframe_rotation_deg > 0.0 && keyframe_rotation_deg < 180.0))
    throw InvalidInput("tracker.keyframe_rotation_deg must be in (0,180)");
  if (!(inlier_threshold_m > 0.0)) throw InvalidInput("tracker.inlier_threshold_m must be positive");
  if (ransac_rounds < 1) throw InvalidInput("tracker.ransac_rounds must be positive");
  if (min_inliers < 3) throw InvalidInput("tracker.min_inliers must be at least 3");
  if (!(min_spacing_px >= 0.0)) throw InvalidInput("tracker.min_spacing_px must be non-negative");
  if (!(max_plane_angle_deg > 0.0 && max_plane_angle_deg <= 90.0))
    throw InvalidInput("tracker.max_plane_angle_deg must be in (0,90]");
}

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Square patch sampled on a (n+2)^2 grid so gradients come from central
// differences inside the patch itself.
struct Template {
  int n = 0;
  std::vector<float> value;  // n*n
  std::vector<float> gx;
  std::vector<float> gy;
  Eigen::Matrix2d hessian = Eigen::Matrix2d::Zero();
  bool ok = false;
};

template <typename Sampler>
Template make_template(int n, Sampler&& sample) {
  Template t;
  t.n = n;
  const int half = n / 2;
  const int g = n + 2;
  std::vector<float> grid(static_cast<std::size_t>(g * g));
  for (int y = 0; y < g; ++y)
    for (int x = 0; x < g; ++x) grid[static_cast<std::size_t>(y * g + x)] = sample(x - half - 1, y - half - 1);
  t.value.resize(static_cast<std::size_t>(n * n));
  t.gx.resize(t.value.size());
  t.gy.resize(t.value.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const auto at = [&](int gx, int gy) { return grid[static_cast<std::size_t>(gy * g + gx)]; };
      const auto i = static_cast<std::size_t>(y * n + x);
      t.value[i] = at(x + 1, y + 1);
      t.gx[i] = 0.5f * (at(x + 2, y + 1) - at(x, y + 1));
      t.gy[i] = 0.5f * (at(x + 1, y + 2) - at(x + 1, y));
      t.hessian(0, 0) += t.gx[i] * t.gx[i];
      t.hessian(0, 1) += t.gx[i] * t.gy[i];
      t.hessian(1, 1) += t.gy[i] * t.gy[i];
    }
  t.hessian(1, 0) = t.hessian(0, 1);
  const double det = t.hessian.determinant();
  t.ok = det > 1e-6 * std::max(1.0, t.hessian.trace() * t.hessian.trace()) && det > 1e-3;
  return t;
}

struct AlignResult {
  bool ok = false;
  double residual = 0.0;
};

// Inverse-compositional translational alignment of `t` in `img`, starting at pos.
AlignResult lk_align(const Template& t, const GrayImage& img, Eigen::Vector2d& pos, int iterations, double eps) {
  AlignResult r;
  if (!t.ok) return r;
  const int half = t.n / 2;
  const Eigen::Matrix2d inv = t.hessian.inverse();
  for (int it = 0; it < iterations; ++it) {
    if (!img.contains(pos.x(), pos.y(), half + 1)) return r;
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
    for (int y = 0; y < t.n; ++y)
      for (int x = 0; x < t.n; ++x) {
        const auto i = static_cast<std::size_t>(y * t.n + x);
        const double e = img.sample(pos.x() + x - half, pos.y() + y - half) - t.value[i];
        b.x() += e * t.gx[i];
        b.y() += e * t.gy[i];
      }
    const Eigen::Vector2d delta = inv * b;
    pos -= delta;
    if (!delta.allFinite()) return r;
    if (delta.norm() < eps) break;
  }
  if (!img.contains(pos.x(), pos.y(), half + 1)) return r;
  double sum = 0.0;
  for (int y = 0; y < t.n; ++y)
    for (int x = 0; x < t.n; ++x)
      sum += std::abs(img.sample(pos.x() + x - half, pos.y() + y - half) - t.value[static_cast<std::size_t>(y * t.n + x)]);
  r.residual = sum / (t.n * t.n);
  r.ok = true;
  return r;
}

std::optional<Eigen::Vector3d> point_at(const RgbdFrame& frame, const CameraIntrinsics& k, const Eigen::Vector2d& px) {
  const double z = sample_depth(frame, k.depth_scale, px.x(), px.y());
  if (!(z > 0.0)) return std::nullopt;
  return back_project(k, px.x(), px.y(), z);
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<TrackedFeature> detect_features(const RgbdFrame& frame, const CameraIntrinsics& intrinsics, int max_count,
                                            const TrackerConfig& config, std::span<const TrackedFeature> existing,
                                            int first_id) {
  std::vector<TrackedFeature> out;
  if (max_count <= 0) return out;
  const GrayImage g = to_gray(frame);
  const int w = g.width;
  const int h = g.height;
  const int border = config.patch / 2 + 3;
  if (w <= 2 * border || h <= 2 * border) return out;

  // Structure tensor entries and their 5x5 box means via integral images.
  const auto W = static_cast<std::size_t>(w + 1);
  std::vector<double> ixx(W * (h + 1), 0.0), ixy(ixx.size(), 0.0), iyy(ixx.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double gx = 0.0, gy = 0.0;
      if (x > 0 && x < w - 1) gx = 0.5 * (g.at(x + 1, y) - g.at(x - 1, y));
      if (y > 0 && y < h - 1) gy = 0.5 * (g.at(x, y + 1) - g.at(x, y - 1));
      const std::size_t i = (y + 1) * W + (x + 1);
      ixx[i] = gx * gx + ixx[i - 1] + ixx[i - W] - ixx[i - W - 1];
      ixy[i] = gx * gy + ixy[i - 1] + ixy[i - W] - ixy[i - W - 1];
      iyy[i] = gy * gy + iyy[i - 1] + iyy[i - W] - iyy[i - W - 1];
    }
  const auto box = [&](const std::vector<double>& s, int x, int y) {
    const std::size_t x0 = static_cast<std::size_t>(x - 2), x1 = static_cast<std::size_t>(x + 3);
    const std::size_t y0 = static_cast<std::size_t>(y - 2), y1 = static_cast<std::size_t>(y + 3);
    return (s[y1 * W + x1] - s[y0 * W + x1] - s[y1 * W + x0] + s[y0 * W + x0]) / 25.0;
  };
  std::vector<float> score(static_cast<std::size_t>(w) * h, 0.0f);
  float best = 0.0f;
  for (int y = border; y < h - border; ++y)
    for (int x = border; x < w - border; ++x) {
      const double a = box(ixx, x, y), b = box(ixy, x, y), c = box(iyy, x, y);
      const double lmin = 0.5 * (a + c) - std::sqrt(0.25 * (a - c) * (a - c) + b * b);
      score[static_cast<std::size_t>(y) * w + x] = static_cast<float>(lmin);
      best = std::max(best, static_cast<float>(lmin));
    }
  const double threshold = std::max(config.min_corner_score, config.quality_level * best);

  struct Cand {
    float s;
    int idx;
  };
  std::vector<Cand> cands;
  for (int y = border; y < h - border; ++y)
    for (int x = border; x < w - border; ++x) {
      const float s = score[static_cast<std::size_t>(y) * w + x];
      if (s <= threshold) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if ((dx || dy) && score[static_cast<std::size_t>(y + dy) * w + x + dx] > s) {
            is_max = false;
            break;
          }
      if (is_max) cands.push_back({s, y * w + x});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.s != b.s ? a.s > b.s : a.idx < b.idx; });

  const double spacing = std::max(config.min_spacing_px, 1.0);
  const int cell = static_cast<int>(std::ceil(spacing));
  const int gw = w / cell + 1;
  const int gh = h / cell + 1;
  std::vector<std::vector<Eigen::Vector2d>> grid(static_cast<std::size_t>(gw * gh));
  const auto occupied = [&](const Eigen::Vector2d& p) {
    const int cx = static_cast<int>(p.x()) / cell, cy = static_cast<int>(p.y()) / cell;
    for (int y = std::max(0, cy - 1); y <= std::min(gh - 1, cy + 1); ++y)
      for (int x = std::max(0, cx - 1); x <= std::min(gw - 1, cx + 1); ++x)
        for (const auto& q : grid[static_cast<std::size_t>(y * gw + x)])
          if ((q - p).norm() < spacing) return true;
    return false;
  };
  const auto occupy = [&](const Eigen::Vector2d& p) {
    const int cx = std::clamp(static_cast<int>(p.x()) / cell, 0, gw - 1);
    const int cy = std::clamp(static_cast<int>(p.y()) / cell, 0, gh - 1);
    grid[static_cast<std::size_t>(cy * gw + cx)].push_back(p);
  };
  for (const auto& f : existing)
    if (f.usable()) occupy(f.pixel);

  int id = first_id;
  for (const auto& c : cands) {
    if (static_cast<int>(out.size()) >= max_count) break;
    const Eigen::Vector2d p(c.idx % w, c.idx / w);
    if (occupied(p)) continue;
    occupy(p);
    TrackedFeature f;
    f.feature_id = id++;
    f.pixel = p;
    f.point3d = point_at(frame, intrinsics, p);
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<TrackedFeature> track_pyramids(const std::vector<GrayImage>& prev, const std::vector<GrayImage>& next,
                                           const RgbdFrame& next_frame, std::span<const TrackedFeature> features,
                                           const CameraIntrinsics& intrinsics, const TrackerConfig& config,
                                           std::span<const Eigen::Vector2d> guesses) {
  std::vector<TrackedFeature> out(features.begin(), features.end());
  const int levels = static_cast<int>(std::min(prev.size(), next.size()));
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t fi = 0; fi < n; ++fi) {
    TrackedFeature& f = out[static_cast<std::size_t>(fi)];
    if (!f.usable()) continue;
    const Eigen::Vector2d origin = f.pixel;
    Eigen::Vector2d disp = guesses.empty() ? Eigen::Vector2d::Zero() : Eigen::Vector2d(guesses[static_cast<std::size_t>(fi)] - origin);
    AlignResult res;
    for (int l = levels - 1; l >= 0; --l) {
      const double s = std::ldexp(1.0, -l);
      const GrayImage& pimg = prev[static_cast<std::size_t>(l)];
      const Eigen::Vector2d c = origin * s;
      if (!pimg.contains(c.x(), c.y(), config.patch / 2 + 2)) {
        if (l == 0) res.ok = false;
        continue;
      }
      const Template t = make_template(config.patch, [&](int dx, int dy) { return pimg.sample(c.x() + dx, c.y() + dy); });
      Eigen::Vector2d pos = (origin + disp) * s;
      res = lk_align(t, next[static_cast<std::size_t>(l)], pos, config.max_iterations, config.convergence_px);
      if (res.ok) disp = pos / s - origin;
    }
    if (!res.ok || res.residual > config.max_residual) {
      f.status = FeatureStatus::lost;
      continue;
    }
    f.pixel = origin + disp;
    f.status = FeatureStatus::alive;
    f.point3d = point_at(next_frame, intrinsics, f.pixel);
    f.normal.reset();
  }
  return out;
}

std::vector<TrackedFeature> track_frame(const RgbdFrame& prev, const RgbdFrame& next,
                                        std::span<const TrackedFeature> features, const CameraIntrinsics& intrinsics,
                                        const TrackerConfig& config, std::span<const Eigen::Vector2d> guesses) {
  if (prev.width != next.width || prev.height != next.height) throw InvalidInput("track_frame: frame sizes differ");
  if (!guesses.empty() && guesses.size() != features.size()) throw InvalidInput("track_frame: one guess per feature");
  const auto pp = build_pyramid(to_gray(prev), config.pyramid_levels);
  const auto np = build_pyramid(to_gray(next), config.pyramid_levels);
  return track_pyramids(pp, np, next, features, intrinsics, config, guesses);
}

void attach_normals(Keyframe& keyframe, const CameraIntrinsics& intrinsics, int k) {
  const ObjectCloud cloud = depth_to_cloud(keyframe.frame, intrinsics);
  std::vector<std::int32_t> pixels;
  for (const auto& f : keyframe.features) {
    const int u = static_cast<int>(std::lround(f.pixel.x()));
    const int v = static_cast<int>(std::lround(f.pixel.y()));
    if (keyframe.frame.in_bounds(u, v)) pixels.push_back(keyframe.frame.index(u, v));
  }
  const ObjectCloud with = estimate_normals_organized(cloud, k, 4, pixels);
  for (auto& f : keyframe.features) {
    f.normal.reset();
    if (!f.point3d) continue;
    const int u = static_cast<int>(std::lround(f.pixel.x()));
    const int v = static_cast<int>(std::lround(f.pixel.y()));
    if (!keyframe.frame.in_bounds(u, v)) continue;
    const auto slot = static_cast<std::size_t>(keyframe.frame.index(u, v));
    if (with.normal_valid[slot]) f.normal = with.normals[slot];
  }
}

namespace {

std::vector<TrackedFeature> refine_impl(const Keyframe& keyframe, const GrayImage& kf_gray, const GrayImage& cur_gray,
                                        const RgbdFrame& frame, const Pose& rel,
                                        std::span<const TrackedFeature> features, const CameraIntrinsics& k,
                                        const TrackerConfig& config) {
  std::vector<TrackedFeature> out(features.begin(), features.end());
  std::unordered_map<int, std::size_t> slot;
  for (std::size_t i = 0; i < out.size(); ++i) slot[out[i].feature_id] = i;

  Eigen::Matrix3d K;
  K << k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0;
  const Eigen::Matrix3d Kinv = K.inverse();
  const double cos_limit = std::cos(config.max_plane_angle_deg * kDegToRad);

  for (const TrackedFeature& kf : keyframe.features) {
    if (!kf.point3d || !kf.normal) continue;
    const Eigen::Vector3d& X = *kf.point3d;
    const Eigen::Vector3d& nrm = *kf.normal;
    if (std::abs(nrm.dot(-X.normalized())) < cos_limit) continue;  // grazing in the keyframe
    const Eigen::Vector3d Xc = rel * X;
    if (!(Xc.z() > 0.0)) continue;
    if (std::abs(rel.rotate(nrm).dot(-Xc.normalized())) < cos_limit) continue;  // grazing in the frame
    const double d = nrm.dot(X);
    if (std::abs(d) < 1e-9) continue;
    // Points Y on the plane n.Y = d map as Y' = (R + t n^T / d) Y.
    const Eigen::Matrix3d H = K * (rel.rotation + rel.translation * nrm.transpose() / d) * Kinv;
    Eigen::Matrix3d Hinv;
    bool invertible = false;
    H.computeInverseWithCheck(Hinv, invertible);
    if (!invertible) continue;
    const Eigen::Vector3d xp = H * Eigen::Vector3d(kf.pixel.x(), kf.pixel.y(), 1.0);
    if (!(xp.z() > 0.0)) continue;
    const Eigen::Vector2d pred = xp.head<2>() / xp.z();
    const int half = config.patch / 2;
    if (!cur_gray.contains(pred.x(), pred.y(), half + 2)) continue;
    bool inside = true;
    const Template t = make_template(config.patch, [&](int dx, int dy) {
      const Eigen::Vector3d y = Hinv * Eigen::Vector3d(pred.x() + dx, pred.y() + dy, 1.0);
      const double u = y.x() / y.z(), v = y.y() / y.z();
      if (!kf_gray.contains(u, v)) {
        inside = false;
        return 0.0f;
      }
      return kf_gray.sample(u, v);
    });
    if (!inside) continue;
    Eigen::Vector2d pos = pred;
    const AlignResult res = lk_align(t, cur_gray, pos, config.max_iterations, config.convergence_px);
    if (!res.ok || res.residual > config.max_residual || (pos - pred).norm() > 2.0 * half) continue;

    TrackedFeature f = kf;
    f.pixel = pos;
    f.status = FeatureStatus::refined;
    f.point3d = point_at(frame, k, pos);
    f.normal.reset();
    if (const auto it = slot.find(kf.feature_id); it != slot.end()) {
      out[it->second] = std::move(f);
    } else {
      slot[f.feature_id] = out.size();
      out.push_back(std::move(f));
    }
  }
  return out;
}

}  // namespace

std::vector<TrackedFeature> refine_against_keyframe(const Keyframe& keyframe, const RgbdFrame& frame,
                                                    const Pose& keyframe_to_frame,
                                                    std::span<const TrackedFeature> features,
                                                    const CameraIntrinsics& intrinsics, const TrackerConfig& config) {
  if (!keyframe_to_frame.rotation.allFinite() || !keyframe_to_frame.translation.allFinite())
    throw InvalidInput("refine_against_keyframe: non-finite pose hypothesis");
  return refine_impl(keyframe, to_gray(keyframe.frame), to_gray(frame), frame, keyframe_to_frame, features, intrinsics,
                     config);
}

// ---------------------------------------------------------------------------
// Tracker

Tracker::Tracker(const CameraIntrinsics& intrinsics, TrackerConfig config, bool refine)
    : intrinsics_(intrinsics), config_(config), refine_(refine), rng_(config.seed) {
  intrinsics_.validate();
  config_.validate();
}

std::optional<Pose> Tracker::estimate_pose(std::span<const TrackedFeature> features, const RgbdFrame& frame,
                                           std::vector<int>& inliers) {
  (void)frame;
  std::vector<Eigen::Vector3d> src, dst;
  std::vector<int> which;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    if (!f.usable() || !f.point3d) continue;
    const auto id = static_cast<std::size_t>(f.feature_id);
    if (id >= anchors_.size() || !anchors_[id].valid) continue;
    src.push_back(*f.point3d);
    dst.push_back(anchors_[id].model);
    which.push_back(static_cast<int>(i));
  }
  inliers.clear();
  const auto n = static_cast<int>(src.size());
  if (n < config_.min_inliers) return std::nullopt;

  const double thr2 = config_.inlier_threshold_m * config_.inlier_threshold_m;
  const auto collect = [&](const Pose& T, std::vector<int>& idx) {
    idx.clear();
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = (T * src[static_cast<std::size_t>(i)] - dst[static_cast<std::size_t>(i)]).squaredNorm();
      if (e < thr2) {
        idx.push_back(i);
        cost += e;
      } else {
        cost += thr2;
      }
    }
    return cost;
  };

  std::vector<int> best, cur;
  double best_cost = std::numeric_limits<double>::infinity();
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int round = 0; round < config_.ransac_rounds; ++round) {
    int s[4];
    for (int j = 0; j < 4; ++j) {
      bool dup = true;
      while (dup) {
        s[j] = pick(rng_);
        dup = std::find(s, s + j, s[j]) != s + j;
      }
    }
    const Eigen::Vector3d a[4] = {src[s[0]], src[s[1]], src[s[2]], src[s[3]]};
    const Eigen::Vector3d b[4] = {dst[s[0]], dst[s[1]], dst[s[2]], dst[s[3]]};
    Pose T;
    try {
      T = rigid_from_correspondences(a, b);
    } catch (const EstimationError&) {
      continue;
    }
    const double cost = collect(T, cur);
    if (cur.size() > best.size() || (cur.size() == best.size() && cost < best_cost)) {
      best = cur;
      best_cost = cost;
    }
  }
  if (static_cast<int>(best.size()) < config_.min_inliers) return std::nullopt;

  Pose T;
  for (int pass = 0; pass < 3; ++pass) {
    std::vector<Eigen::Vector3d> a, b;
    for (const int i : best) {
      a.push_back(src[static_cast<std::size_t>(i)]);
      b.push_back(dst[static_cast<std::size_t>(i)]);
    }
    try {
      T = rigid_from_correspondences(a, b);
    } catch (const EstimationError&) {
      return std::nullopt;
    }
    collect(T, cur);
    if (static_cast<int>(cur.size()) < config_.min_inliers) return std::nullopt;
    if (cur == best) break;
    best = cur;
  }
  for (const int i : best) inliers.push_back(which[static_cast<std::size_t>(i)]);
  return T;
}

void Tracker::add_keyframe(const RgbdFrame& frame, const Pose& pose, std::vector<TrackedFeature> features,
                           const std::vector<GrayImage>& pyramid) {
  std::vector<TrackedFeature> kept;
  for (auto& f : features) {
    if (!f.usable()) continue;
    f.status = FeatureStatus::alive;
    f.point3d = point_at(frame, intrinsics_, f.pixel);
    kept.push_back(std::move(f));
  }
  const int room = config_.max_features - static_cast<int>(kept.size());
  if (room > 0) {
    auto fresh = detect_features(frame, intrinsics_, room, config_, kept, next_feature_id_);
    for (auto& f : fresh) kept.push_back(std::move(f));
  }
  for (const auto& f : kept) {
    next_feature_id_ = std::max(next_feature_id_, f.feature_id + 1);
    if (anchors_.size() <= static_cast<std::size_t>(f.feature_id)) anchors_.resize(static_cast<std::size_t>(f.feature_id) + 1);
    auto& a = anchors_[static_cast<std::size_t>(f.feature_id)];
    a.valid = f.point3d.has_value();
    if (a.valid) a.model = pose * *f.point3d;
  }
  Keyframe kf;
  kf.frame = frame;
  kf.pose = pose;
  kf.features = std::move(kept);
  attach_normals(kf, intrinsics_);
  keyframes_.push_back(std::move(kf));
  keyframe_pyramid_ = pyramid;
}

FramePose Tracker::process(const RgbdFrame& frame) {
  frame.validate();
  if (frame.width != intrinsics_.width || frame.height != intrinsics_.height)
    throw InvalidInput("tracker: frame size does not match intrinsics");
  const auto pyramid = build_pyramid(to_gray(frame), config_.pyramid_levels);

  FramePose fp;
  fp.frame_id = frame.frame_id;

  if (!started_) {
    auto features = detect_features(frame, intrinsics_, config_.max_features, config_, {}, 0);
    const auto with_depth = std::count_if(features.begin(), features.end(), [](const auto& f) { return f.point3d.has_value(); });
    if (with_depth < config_.min_inliers)
      throw StageError("tracking: first frame " + std::to_string(frame.frame_id) + " has only " +
                       std::to_string(with_depth) + " depth-valid features");
    add_keyframe(frame, Pose::identity(), std::move(features), pyramid);
    started_ = true;
    prev_pyramid_ = pyramid;
    prev_features_ = keyframes_.back().features;
    prev_pose_ = Pose::identity();
    fp.tracked = true;
    fp.inliers = static_cast<int>(with_depth);
    fp.keyframe = 0;
    return fp;
  }

  const Keyframe& kf = keyframes_.back();
  const std::vector<GrayImage>& ref_pyr = last_failed_ ? keyframe_pyramid_ : prev_pyramid_;
  const std::vector<TrackedFeature>& ref_feats = last_failed_ ? kf.features : prev_features_;
  const Pose predicted = velocity_ ? prev_pose_ * *velocity_ : prev_pose_;
  const Pose model_to_cam = predicted.inverse();

  std::vector<Eigen::Vector2d> guesses;
  guesses.reserve(ref_feats.size());
  for (const auto& f : ref_feats) {
    Eigen::Vector2d g = f.pixel;
    const auto id = static_cast<std::size_t>(f.feature_id);
    Eigen::Vector2d uv;
    if (id < anchors_.size() && anchors_[id].valid && project(intrinsics_, model_to_cam * anchors_[id].model, uv) &&
        uv.x() >= 0 && uv.y() >= 0 && uv.x() <= frame.width - 1 && uv.y() <= frame.height - 1)
      g = uv;
    guesses.push_back(g);
  }
  auto tracked = track_pyramids(ref_pyr, pyramid, frame, ref_feats, intrinsics_, config_, guesses);

  std::vector<int> inliers;
  std::optional<Pose> pose = estimate_pose(tracked, frame, inliers);
  if (pose && refine_) {
    const Pose rel = pose->inverse() * kf.pose;
    auto refined = refine_impl(kf, keyframe_pyramid_.front(), pyramid.front(), frame, rel, tracked, intrinsics_, config_);
    std::vector<int> refined_inliers;
    if (auto p2 = estimate_pose(refined, frame, refined_inliers)) {
      pose = p2;
      tracked = std::move(refined);
      inliers = std::move(refined_inliers);
    }
  }

  if (!pose) {
    ++consecutive_failures_;
    last_failed_ = true;
    velocity_.reset();
    fp.pose = prev_pose_;
    fp.increment = Pose::identity();
    fp.tracked = false;
    if (consecutive_failures_ > config_.max_consecutive_failures)
      throw StageError("tracking: lost after " + std::to_string(consecutive_failures_) + " consecutive failed frames");
    return fp;
  }

  std::vector<char> is_inlier(tracked.size(), 0);
  for (const int i : inliers) is_inlier[static_cast<std::size_t>(i)] = 1;
  std::vector<TrackedFeature> alive;
  for (std::size_t i = 0; i < tracked.size(); ++i) {
    auto& f = tracked[i];
    if (!f.usable()) continue;
    // features with an anchor but inconsistent with the pose are dropped
    const auto id = static_cast<std::size_t>(f.feature_id);
    const bool anchored = id < anchors_.size() && anchors_[id].valid && f.point3d;
    if (anchored && !is_inlier[i]) continue;
    alive.push_back(f);
  }

  fp.pose = *pose;
  fp.increment = prev_pose_.inverse() * *pose;
  fp.tracked = true;
  fp.inliers = static_cast<int>(inliers.size());
  velocity_ = last_failed_ ? std::nullopt : std::optional<Pose>(fp.increment);

  const bool moved = translation_distance(kf.pose, *pose) > config_.keyframe_translation_m ||
                     rotation_distance(kf.pose, *pose) > config_.keyframe_rotation_deg * kDegToRad;
  if (moved) {
    add_keyframe(frame, *pose, alive, pyramid);
    fp.keyframe = static_cast<int>(keyframes_.size()) - 1;
    prev_features_ = keyframes_.back().features;
  } else {
    prev_features_ = std::move(alive);
  }
  prev_pyramid_ = pyramid;
  prev_pose_ = *pose;
  last_failed_ = false;
  consecutive_failures_ = 0;
  return fp;
}

TrackingResult track_sequence(const FrameSource& frames, const CameraIntrinsics& intrinsics,
                              const TrackerConfig& config, bool refine) {
  TrackingResult result;
  Tracker tracker(intrinsics, config, refine);
  while (auto frame = frames()) {
    try {
      FramePose fp = tracker.process(*frame);
      if (!fp.tracked) result.failed_frames.push_back(fp.frame_id);
      result.poses.push_back(fp);
    } catch (const StageError& e) {
      result.failed_frames.push_back(frame->frame_id);
      result.aborted = true;
      result.abort_reason = e.what();
      break;
    }
  }
  result.keyframes = tracker.take_keyframes();
  return result;
}

}  // namespace objmodel
