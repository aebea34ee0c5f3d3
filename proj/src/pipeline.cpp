#include "objmodel/pipeline.hpp"

#include "objmodel/error.hpp"
#include "objmodel/io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace objmodel {
namespace fs = std::filesystem;

namespace {

// --- configuration table --------------------------------------------------

struct Param {
  std::string key;
  std::optional<Stage> stage;  // earliest stage that depends on it; none for merge-only keys
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw InvalidInput("config: " + key + " expects a number, got '" + v + "'");
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw InvalidInput("config: " + key + " expects an integer, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidInput("config: " + key + " expects true or false, got '" + v + "'");
}

template <class T>
using Access = T& (*)(PipelineConfig&);

template <class T>
Param num(std::string key, std::optional<Stage> stage, Access<T> at) {
  Param p;
  p.key = key;
  p.stage = stage;
  p.get = [at](const PipelineConfig& c) {
    const T v = at(const_cast<PipelineConfig&>(c));
    if constexpr (std::is_same_v<T, bool>)
      return std::string(v ? "true" : "false");
    else if constexpr (std::is_floating_point_v<T>)
      return io::format_number(v);
    else
      return std::to_string(v);
  };
  p.set = [at, key](PipelineConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) {
      at(c) = parse_bool(key, v);
    } else if constexpr (std::is_floating_point_v<T>) {
      at(c) = parse_double(key, v);
    } else if constexpr (std::is_unsigned_v<T>) {
      const long long x = parse_int(key, v);
      if (x < 0) throw InvalidInput("config: " + key + " must not be negative");
      at(c) = static_cast<T>(x);
    } else {
      const long long x = parse_int(key, v);
      if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max())
        throw InvalidInput("config: " + key + " out of range");
      at(c) = static_cast<T>(x);
    }
  };
  return p;
}

#define OM_PARAM(T, key, stage, expr) num<T>(key, stage, +[](PipelineConfig& c) -> T& { return expr; })

const std::vector<Param>& params() {
  static const std::vector<Param> table = [] {
    constexpr auto T = Stage::track, S = Stage::segment, R = Stage::refine, P = Stage::postprocess;
    const std::optional<Stage> M;
    std::vector<Param> t{
        OM_PARAM(int, "tracker.max_features", T, c.tracker.max_features),
        OM_PARAM(int, "tracker.patch", T, c.tracker.patch),
        OM_PARAM(int, "tracker.pyramid_levels", T, c.tracker.pyramid_levels),
        OM_PARAM(int, "tracker.max_iterations", T, c.tracker.max_iterations),
        OM_PARAM(double, "tracker.convergence_px", T, c.tracker.convergence_px),
        OM_PARAM(double, "tracker.max_residual", T, c.tracker.max_residual),
        OM_PARAM(double, "tracker.min_spacing_px", T, c.tracker.min_spacing_px),
        OM_PARAM(double, "tracker.min_corner_score", T, c.tracker.min_corner_score),
        OM_PARAM(double, "tracker.quality_level", T, c.tracker.quality_level),
        OM_PARAM(double, "tracker.keyframe_translation_m", T, c.tracker.keyframe_translation_m),
        OM_PARAM(double, "tracker.keyframe_rotation_deg", T, c.tracker.keyframe_rotation_deg),
        OM_PARAM(double, "tracker.inlier_threshold_m", T, c.tracker.inlier_threshold_m),
        OM_PARAM(int, "tracker.ransac_rounds", T, c.tracker.ransac_rounds),
        OM_PARAM(int, "tracker.min_inliers", T, c.tracker.min_inliers),
        OM_PARAM(double, "tracker.max_plane_angle_deg", T, c.tracker.max_plane_angle_deg),
        OM_PARAM(int, "tracker.max_consecutive_failures", T, c.tracker.max_consecutive_failures),
        OM_PARAM(std::uint64_t, "tracker.seed", T, c.tracker.seed),
        OM_PARAM(bool, "tracker.refine", T, c.tracker_refine),

        OM_PARAM(int, "segmentation.plane_iterations", S, c.segmentation.plane_iterations),
        OM_PARAM(double, "segmentation.plane_threshold_m", S, c.segmentation.plane_threshold_m),
        OM_PARAM(int, "segmentation.plane_min_inliers", S, c.segmentation.plane_min_inliers),
        OM_PARAM(double, "segmentation.plane_normal_deg", S, c.segmentation.plane_normal_deg),
        OM_PARAM(int, "segmentation.max_planes", S, c.segmentation.max_planes),
        OM_PARAM(double, "segmentation.background_fraction", S, c.segmentation.background_fraction),
        OM_PARAM(double, "segmentation.cluster_angle_deg", S, c.segmentation.cluster_angle_deg),
        OM_PARAM(double, "segmentation.cluster_distance_m", S, c.segmentation.cluster_distance_m),
        OM_PARAM(bool, "segmentation.cluster_convex", S, c.segmentation.cluster_convex),
        OM_PARAM(int, "segmentation.min_cluster_size", S, c.segmentation.min_cluster_size),
        OM_PARAM(double, "segmentation.voxel_m", S, c.segmentation.voxel_m),
        OM_PARAM(int, "segmentation.normal_k", S, c.segmentation.normal_k),
        OM_PARAM(std::uint64_t, "segmentation.seed", S, c.segmentation.seed),
        OM_PARAM(int, "segment.select", S, c.select),

        OM_PARAM(int, "refine.iterations", R, c.refinement.iterations),
        OM_PARAM(double, "refine.convergence_eps", R, c.refinement.convergence_eps),
        OM_PARAM(double, "refine.gate_start_m", R, c.refinement.gate_start_m),
        OM_PARAM(double, "refine.gate_factor", R, c.refinement.gate_factor),
        OM_PARAM(int, "refine.gate_every", R, c.refinement.gate_every),
        OM_PARAM(double, "refine.gate_floor_m", R, c.refinement.gate_floor_m),
        OM_PARAM(double, "refine.normal_reject_deg", R, c.refinement.normal_reject_deg),
        OM_PARAM(double, "refine.overlap_min", R, c.refinement.overlap_min),
        OM_PARAM(double, "refine.overlap_distance_m", R, c.refinement.overlap_distance_m),
        OM_PARAM(int, "refine.min_pairs", R, c.refinement.min_pairs),
        OM_PARAM(int, "refine.max_points", R, c.refinement.max_points),
        OM_PARAM(double, "refine.min_weight", R, c.refinement.min_weight),

        OM_PARAM(double, "noise.theta_max_deg", R, c.noise.theta_max_deg),
        OM_PARAM(double, "noise.sigma_lateral", R, c.noise.sigma_lateral),
        OM_PARAM(double, "noise.edge_depth_jump", R, c.noise.edge_depth_jump),
        OM_PARAM(double, "noise.grazing_cutoff_deg", R, c.noise.grazing_cutoff_deg),

        OM_PARAM(double, "fusion.radius", P, c.fusion.radius),
        OM_PARAM(double, "fusion.normal_tolerance", P, c.fusion.normal_tolerance),
        OM_PARAM(double, "fusion.w_min_total", P, c.fusion.w_min_total),
        OM_PARAM(double, "fusion.normal_angle_deg", P, c.fusion.normal_angle_deg),
        OM_PARAM(double, "fusion.contradiction_sigmas", P, c.fusion.contradiction_sigmas),
        OM_PARAM(int, "fusion.min_contradictions", P, c.fusion.min_contradictions),
        OM_PARAM(bool, "fusion.use_weights", P, c.fusion.use_weights),
        OM_PARAM(bool, "fusion.keep_light_groups", P, c.fusion.keep_light_groups),

        OM_PARAM(double, "multisession.assoc_distance_m", M, c.multisession.assoc_distance_m),
        OM_PARAM(double, "multisession.surface_epsilon_m", M, c.multisession.surface_epsilon_m),
        OM_PARAM(double, "multisession.fsv_scale", M, c.multisession.fsv_scale),
        OM_PARAM(double, "multisession.overlap_floor", M, c.multisession.overlap_floor),
        OM_PARAM(int, "multisession.yaw_samples", M, c.multisession.yaw_samples),
        OM_PARAM(double, "multisession.min_face_fraction", M, c.multisession.min_face_fraction),
        OM_PARAM(double, "multisession.keypoint_spacing_m", M, c.multisession.keypoint_spacing_m),
        OM_PARAM(double, "multisession.descriptor_radius_m", M, c.multisession.descriptor_radius_m),
        OM_PARAM(double, "multisession.ratio_test", M, c.multisession.ratio_test),
        OM_PARAM(double, "multisession.consensus_m", M, c.multisession.consensus_m),
        OM_PARAM(int, "multisession.ransac_iterations", M, c.multisession.ransac_iterations),
        OM_PARAM(int, "multisession.min_consensus", M, c.multisession.min_consensus),
        OM_PARAM(int, "multisession.max_candidates", M, c.multisession.max_candidates),
        OM_PARAM(std::uint64_t, "multisession.seed", M, c.multisession.seed),
    };
    Param mode;
    mode.key = "segment.mode";
    mode.stage = S;
    mode.get = [](const PipelineConfig& c) { return c.segment_mode; };
    mode.set = [](PipelineConfig& c, const std::string& v) {
      if (v != "planes" && v != "roi") throw InvalidInput("config: segment.mode must be planes or roi, got '" + v + "'");
      c.segment_mode = v;
    };
    t.push_back(mode);
    Param roi;
    roi.key = "segment.roi";
    roi.stage = S;
    roi.get = [](const PipelineConfig& c) {
      if (!c.roi) return std::string("none");
      std::string s;
      for (int a = 0; a < 6; ++a)
        s += (a ? "," : "") + io::format_number(a < 3 ? c.roi->min[a] : c.roi->max[a - 3]);
      return s;
    };
    roi.set = [](PipelineConfig& c, const std::string& v) {
      if (v == "none" || v.empty()) {
        c.roi.reset();
        return;
      }
      std::vector<double> vals;
      std::stringstream ss(v);
      for (std::string item; std::getline(ss, item, ',');) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        vals.push_back(parse_double("segment.roi", item));
      }
      if (vals.size() != 6) throw InvalidInput("config: segment.roi expects x0,y0,z0,x1,y1,z1");
      RegionOfInterest r;
      r.min = Eigen::Vector3d(vals[0], vals[1], vals[2]);
      r.max = Eigen::Vector3d(vals[3], vals[4], vals[5]);
      c.roi = r;
    };
    t.push_back(roi);
    t.push_back(OM_PARAM(std::uint64_t, "seed", T, c.seed));
    std::sort(t.begin(), t.end(), [](const Param& a, const Param& b) { return a.key < b.key; });
    return t;
  }();
  return table;
}

#undef OM_PARAM

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t fnv(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
  for (const unsigned char ch : s) h = (h ^ ch) * 1099511628211ull;
  return h;
}

// --- files ----------------------------------------------------------------

fs::path stage_dir(const SessionStore& s, Stage st) { return s.root() / stage_name(st); }

std::map<std::string, std::string> read_pairs(const fs::path& path) {
  std::map<std::string, std::string> out;
  std::ifstream in(path);
  std::string a, b;
  while (in >> a >> b) out[a] = b;
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

// Records `stage` as done and forgets every later stage.
void mark_done(const SessionStore& store, Stage stage, const PipelineConfig& cfg, double seconds) {
  std::ostringstream st, tm;
  const auto old_times = read_pairs(store.root() / "timings.txt");
  for (const Stage s : kStages) {
    if (s < stage) {
      if (const auto h = store.recorded_hash(s)) st << stage_name(s) << ' ' << *h << '\n';
      if (const auto it = old_times.find(stage_name(s)); it != old_times.end()) tm << stage_name(s) << ' ' << it->second << '\n';
    } else if (s == stage) {
      st << stage_name(s) << ' ' << stage_hash(cfg, s) << '\n';
      tm << stage_name(s) << ' ' << io::format_number(seconds) << '\n';
    }
  }
  write_text(store.root() / "stages.txt", st.str());
  write_text(store.root() / "timings.txt", tm.str());
  write_text(store.root() / "config.txt", format_key_values(config_to_key_values(cfg)));
}

void forget_from(const SessionStore& store, Stage stage) {
  std::ostringstream st;
  for (const Stage s : kStages)
    if (s < stage)
      if (const auto h = store.recorded_hash(s)) st << stage_name(s) << ' ' << *h << '\n';
  if (fs::exists(store.root() / "stages.txt")) write_text(store.root() / "stages.txt", st.str());
}

fs::path indices_path(const SessionStore& s, std::size_t k) {
  char name[32];
  std::snprintf(name, sizeof name, "kf_%04zu.txt", k);
  return stage_dir(s, Stage::segment) / "indices" / name;
}

const std::vector<fs::path> stage_outputs(const SessionStore& s, Stage st) {
  switch (st) {
    case Stage::track: return {stage_dir(s, st) / "trajectory.txt", stage_dir(s, st) / "keyframes.txt"};
    case Stage::segment: return {stage_dir(s, st) / "hypotheses.txt"};
    case Stage::refine: return {stage_dir(s, st) / "poses.txt", stage_dir(s, st) / "residuals.txt"};
    case Stage::postprocess: return {stage_dir(s, st) / "fused.cloud", stage_dir(s, st) / "stats.txt"};
  }
  return {};
}

// Keyframes with images and the newest poses/indices available on disk.
std::vector<Keyframe> load_keyframes(const SessionStore& store, CameraIntrinsics& intrinsics, bool with_indices,
                                     bool refined_poses) {
  const io::SequenceReader reader(store.sequence());
  intrinsics = reader.intrinsics();
  const auto track = io::read_trajectory(stage_dir(store, Stage::track) / "keyframes.txt");
  std::map<std::int64_t, Pose> refined;
  if (refined_poses)
    for (const auto& [id, pose] : io::read_trajectory(stage_dir(store, Stage::refine) / "poses.txt")) refined[id] = pose;
  std::vector<Keyframe> kfs;
  for (std::size_t k = 0; k < track.size(); ++k) {
    Keyframe kf;
    kf.frame = reader.load_id(track[k].first);
    kf.pose = refined.count(track[k].first) ? refined[track[k].first] : track[k].second;
    if (with_indices) kf.object_indices = io::read_indices(indices_path(store, k));
    kfs.push_back(std::move(kf));
  }
  return kfs;
}

void say(const PipelineLog& log, const std::string& s) {
  if (log) log(s);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// --- config ---------------------------------------------------------------

void PipelineConfig::validate() const {
  tracker.validate();
  segmentation.validate();
  if (segment_mode != "planes" && segment_mode != "roi")
    throw InvalidInput("segment.mode must be planes or roi");
  if (select < 0) throw InvalidInput("segment.select must not be negative");
  if (segment_mode == "roi") {
    if (!roi) throw InvalidInput("segment.mode = roi needs segment.roi");
    roi->validate();
  }
  refinement.validate();
  noise.validate();
  fusion.validate();
  multisession.validate();
}

PipelineConfig config_from_key_values(const KeyValues& kv) {
  PipelineConfig c;
  const auto& table = params();
  for (const auto& [key, value] : kv)
    if (std::none_of(table.begin(), table.end(), [&](const Param& p) { return p.key == key; }))
      throw InvalidInput("config: unknown key '" + key + "'");
  // the global seed first, so explicit module seeds win
  if (const auto it = kv.find("seed"); it != kv.end()) {
    const long long s = parse_int("seed", it->second);
    if (s < 0) throw InvalidInput("config: seed must not be negative");
    c.seed = static_cast<std::uint64_t>(s);
    c.tracker.seed = c.segmentation.seed = c.multisession.seed = c.seed;
  }
  for (const auto& p : table)
    if (p.key != "seed")
      if (const auto it = kv.find(p.key); it != kv.end()) p.set(c, it->second);
  return c;
}

KeyValues config_to_key_values(const PipelineConfig& c) {
  KeyValues kv;
  for (const auto& p : params()) kv[p.key] = p.get(c);
  return kv;
}

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::track: return "track";
    case Stage::segment: return "segment";
    case Stage::refine: return "refine";
    case Stage::postprocess: return "postprocess";
  }
  return "?";
}

std::optional<Stage> parse_stage(const std::string& name) {
  for (const Stage s : kStages)
    if (name == stage_name(s)) return s;
  return std::nullopt;
}

std::string stage_hash(const PipelineConfig& config, Stage stage) {
  std::uint64_t h = fnv("objmodel-stage-v1");
  for (const auto& p : params())
    if (p.stage && *p.stage <= stage) h = fnv(p.key + "=" + p.get(config) + "\n", h);
  return hex64(h);
}

// --- store ----------------------------------------------------------------

std::optional<std::string> SessionStore::recorded_hash(Stage stage) const {
  const auto pairs = read_pairs(root_ / "stages.txt");
  if (const auto it = pairs.find(stage_name(stage)); it != pairs.end()) return it->second;
  return std::nullopt;
}

bool SessionStore::up_to_date(Stage stage, const PipelineConfig& config) const {
  const auto h = recorded_hash(stage);
  if (!h || *h != stage_hash(config, stage)) return false;
  const auto outs = stage_outputs(*this, stage);
  return std::all_of(outs.begin(), outs.end(), [](const fs::path& p) { return fs::exists(p); });
}

fs::path SessionStore::sequence() const {
  const auto kv = read_pairs(root_ / "session.txt");
  const auto it = kv.find("sequence");
  if (it == kv.end()) throw StageError("session " + root_.string() + " has no tracked sequence (run track first)");
  return it->second;
}

void SessionStore::check_prerequisites(Stage stage, const PipelineConfig& config) const {
  for (const Stage s : kStages) {
    if (!(s < stage)) break;
    const auto h = recorded_hash(s);
    if (!h) throw StageError(std::string(stage_name(stage)) + ": stage " + stage_name(s) + " has not run in " + root_.string());
    if (*h != stage_hash(config, s))
      throw InvalidInput(std::string(stage_name(stage)) + ": configuration differs from the one stage " + stage_name(s) +
                         " ran with (hash " + *h + "); rerun from " + stage_name(s) + " or use a fresh session");
    for (const auto& p : stage_outputs(*this, s))
      if (!fs::exists(p)) throw StageError(std::string(stage_name(stage)) + ": missing " + p.string() + " (rerun " + stage_name(s) + ")");
  }
}

// --- stages ---------------------------------------------------------------

void run_track(const fs::path& manifest, const SessionStore& store, const PipelineConfig& cfg, const PipelineLog& log) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = stage_dir(store, Stage::track);
  fs::create_directories(dir);
  forget_from(store, Stage::track);
  io::SequenceReader reader(manifest);
  write_text(store.root() / "session.txt", "sequence " + fs::absolute(manifest).lexically_normal().string() + "\n");
  say(log, "track: " + std::to_string(reader.size()) + " frames, config " + stage_hash(cfg, Stage::track));
  const TrackingResult result =
      track_sequence([&] { return reader.next(); }, reader.intrinsics(), cfg.tracker, cfg.tracker_refine);

  io::Trajectory traj, keys;
  for (const auto& p : result.poses)
    if (p.tracked) traj.emplace_back(p.frame_id, p.pose);
  for (const auto& k : result.keyframes) keys.emplace_back(k.frame.frame_id, k.pose);
  io::write_trajectory(traj, dir / "trajectory.txt");
  io::write_trajectory(keys, dir / "keyframes.txt");
  std::string failed;
  for (const auto id : result.failed_frames) failed += std::to_string(id) + "\n";
  write_text(dir / "failed.txt", failed);
  if (result.aborted) throw StageError("track: " + result.abort_reason + " (partial trajectory kept in " + dir.string() + ")");
  say(log, "track: " + std::to_string(keys.size()) + " keyframes, " + std::to_string(result.failed_frames.size()) +
               " failed frames");
  mark_done(store, Stage::track, cfg, seconds_since(t0));
}

void run_segment(const SessionStore& store, const PipelineConfig& cfg, const PipelineLog& log) {
  cfg.validate();
  store.check_prerequisites(Stage::segment, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  forget_from(store, Stage::segment);
  CameraIntrinsics K;
  auto kfs = load_keyframes(store, K, false, false);
  if (kfs.empty()) throw StageError("segment: no keyframes");
  const fs::path dir = stage_dir(store, Stage::segment);
  fs::create_directories(dir / "indices");
  std::ostringstream hyp_text;
  if (cfg.segment_mode == "roi") {
    hyp_text << "# roi " << config_to_key_values(cfg).at("segment.roi") << "\n";
    segment_by_roi(kfs, *cfg.roi, K, cfg.segmentation);
  } else {
    const auto hyps = object_hypotheses(kfs.front().frame, K, cfg.segmentation);
    hyp_text << "# id size cx cy cz\n";
    for (const auto& h : hyps)
      hyp_text << h.hypothesis_id << ' ' << h.pixel_indices.size() << ' ' << io::format_number(h.centroid.x()) << ' '
               << io::format_number(h.centroid.y()) << ' ' << io::format_number(h.centroid.z()) << "\n";
    say(log, "segment: " + std::to_string(hyps.size()) + " hypotheses in the first keyframe");
    const auto it = std::find_if(hyps.begin(), hyps.end(), [&](const auto& h) { return h.hypothesis_id == cfg.select; });
    if (it == hyps.end()) {
      write_text(dir / "hypotheses.txt.partial", hyp_text.str());
      throw StageError("segment: no hypothesis with id " + std::to_string(cfg.select) + " (" +
                       std::to_string(hyps.size()) + " found)");
    }
    propagate_selection(kfs, 0, *it, K, cfg.segmentation);
  }
  for (std::size_t k = 0; k < kfs.size(); ++k) io::write_indices(kfs[k].object_indices, indices_path(store, k));
  write_text(dir / "hypotheses.txt", hyp_text.str());
  std::size_t total = 0;
  for (const auto& k : kfs) total += k.object_indices.size();
  say(log, "segment: " + std::to_string(total) + " object pixels over " + std::to_string(kfs.size()) + " keyframes");
  mark_done(store, Stage::segment, cfg, seconds_since(t0));
}

void run_refine(const SessionStore& store, const PipelineConfig& cfg, const PipelineLog& log) {
  cfg.validate();
  store.check_prerequisites(Stage::refine, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  forget_from(store, Stage::refine);
  CameraIntrinsics K;
  const auto kfs = load_keyframes(store, K, true, false);
  auto views = make_refinement_views(kfs, K, cfg.refinement, cfg.noise);
  if (views.empty()) throw StageError("refine: no keyframe has object points");
  ViewGraph graph = build_view_graph(std::move(views), cfg.refinement);
  say(log, "refine: " + std::to_string(graph.nodes.size()) + " views, " + std::to_string(graph.edges.size()) + " edges");
  const IcpResult result = multiview_icp(graph, cfg.refinement);

  std::map<std::int64_t, Pose> refined;
  for (std::size_t n = 0; n < graph.nodes.size(); ++n) refined[graph.nodes[n].id] = result.poses[n];
  io::Trajectory poses;
  for (const auto& kf : kfs) {
    const auto it = refined.find(kf.frame.frame_id);
    poses.emplace_back(kf.frame.frame_id, it != refined.end() ? it->second : kf.pose);
  }
  const fs::path dir = stage_dir(store, Stage::refine);
  fs::create_directories(dir);
  io::write_trajectory(poses, dir / "poses.txt");
  std::ostringstream res;
  res << "# iteration gate_m pairs rms_before rms_after step\n";
  for (const auto& it : result.log) {
    res << it.iteration << ' ' << io::format_number(it.gate_m) << ' ' << it.pairs << ' ' << io::format_number(it.rms_before)
        << ' ' << io::format_number(it.rms_after) << ' ' << io::format_number(it.step) << "\n";
    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "refine: it %d gate %.4f pairs %zu rms %.6g -> %.6g", it.iteration, it.gate_m,
                    it.pairs, it.rms_before, it.rms_after);
      log(line);
    }
  }
  for (const auto& w : result.warnings) {
    res << "# warning: " << w << "\n";
    say(log, "refine: warning: " + w);
  }
  write_text(dir / "residuals.txt", res.str());
  mark_done(store, Stage::refine, cfg, seconds_since(t0));
}

void run_postprocess(const SessionStore& store, const PipelineConfig& cfg, const PipelineLog& log) {
  cfg.validate();
  store.check_prerequisites(Stage::postprocess, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  forget_from(store, Stage::postprocess);
  SessionModel session;
  session.keyframes = load_keyframes(store, session.intrinsics, true, true);
  FusionStats stats;
  const ObjectCloud fused = fuse_observations(weighted_views(session, cfg.noise), cfg.fusion, cfg.noise, &stats);
  const fs::path dir = stage_dir(store, Stage::postprocess);
  fs::create_directories(dir);
  std::ostringstream st;
  st << "observations " << stats.observations << "\ndropped_grazing " << stats.dropped_grazing << "\nremoved_inconsistent "
     << stats.removed_inconsistent << "\ngroups_averaged " << stats.groups_averaged << "\nkept_unaveraged "
     << stats.kept_unaveraged << "\ndropped_light " << stats.dropped_light << "\noutput " << stats.output << "\n";
  write_text(dir / "stats.txt", st.str());
  say(log, "postprocess: " + std::to_string(stats.observations) + " observations -> " + std::to_string(stats.output) +
               " points");
  if (fused.valid_count() == 0) throw StageError("postprocess: fused cloud is empty");
  io::write_cloud(fused, dir / "fused.cloud");
  mark_done(store, Stage::postprocess, cfg, seconds_since(t0));
}

void run_stage(Stage stage, const SessionStore& store, const PipelineConfig& config, const PipelineLog& log) {
  switch (stage) {
    case Stage::track: run_track(store.sequence(), store, config, log); break;
    case Stage::segment: run_segment(store, config, log); break;
    case Stage::refine: run_refine(store, config, log); break;
    case Stage::postprocess: run_postprocess(store, config, log); break;
  }
}

std::vector<Stage> run_pipeline(const fs::path& manifest, const SessionStore& store, const PipelineConfig& config,
                                const PipelineLog& log) {
  config.validate();
  fs::create_directories(store.root());
  std::vector<Stage> ran;
  bool stale = false;
  if (fs::exists(store.root() / "session.txt") &&
      fs::absolute(manifest).lexically_normal() != fs::path(store.sequence()))
    stale = true;  // another sequence: start over
  for (const Stage s : kStages) {
    if (!stale && store.up_to_date(s, config)) {
      say(log, std::string(stage_name(s)) + ": up to date, skipped");
      continue;
    }
    stale = true;
    if (s == Stage::track)
      run_track(manifest, store, config, log);
    else
      run_stage(s, store, config, log);
    ran.push_back(s);
  }
  return ran;
}

SessionModel load_session(const SessionStore& store) {
  SessionModel m;
  const bool segmented = store.recorded_hash(Stage::segment).has_value();
  const bool refined = store.recorded_hash(Stage::refine).has_value();
  if (!store.recorded_hash(Stage::track)) throw StageError("session " + store.root().string() + " has not been tracked");
  m.keyframes = load_keyframes(store, m.intrinsics, segmented, refined);
  if (store.recorded_hash(Stage::postprocess)) {
    m.fused = io::read_cloud(stage_dir(store, Stage::postprocess) / "fused.cloud");
    m.postprocessed = true;
  }
  if (fs::exists(store.root() / "config.txt")) m.config = read_key_values(store.root() / "config.txt");
  return m;
}

std::vector<WeightedView> weighted_views(const SessionModel& session, const NoiseModelParams& noise) {
  std::vector<WeightedView> views;
  for (const auto& kf : session.keyframes)
    if (!kf.object_indices.empty()) views.push_back(weighted_view(kf, session.intrinsics, noise));
  return views;
}

void export_model_bundle(const SessionModel& session, const fs::path& out, const NoiseModelParams& noise) {
  if (session.keyframes.empty()) throw StageError("export: session has no keyframes");
  if (std::all_of(session.keyframes.begin(), session.keyframes.end(), [](const auto& k) { return k.object_indices.empty(); }))
    throw StageError("export: session has no segmentation indices");
  if (!session.postprocessed || session.fused.valid_count() == 0) throw StageError("export: session has no fused cloud");
  fs::create_directories(out / "views");
  std::ostringstream manifest;
  manifest << "# object model bundle\nintrinsics intrinsics.txt\nfused fused.cloud\nposes views/poses.txt\n";
  io::Trajectory poses;
  std::size_t n = 0;
  for (const auto& kf : session.keyframes) {
    if (kf.object_indices.empty()) continue;
    char name[32];
    std::snprintf(name, sizeof name, "view_%04zu.cloud", n++);
    io::write_cloud(weighted_view(kf, session.intrinsics, noise).cloud, out / "views" / name);
    poses.emplace_back(kf.frame.frame_id, kf.pose);
    manifest << "view " << kf.frame.frame_id << " views/" << name << "\n";
  }
  io::write_trajectory(poses, out / "views" / "poses.txt");
  io::write_intrinsics(session.intrinsics, out / "intrinsics.txt");
  io::write_cloud(session.fused, out / "fused.cloud");
  write_text(out / "manifest.txt", manifest.str());
}

}  // namespace objmodel
