// objmodel: command-line front end. Each subcommand runs one pipeline stage
// on a session directory or works on standalone files.
#include "objmodel/error.hpp"
#include "objmodel/io.hpp"
#include "objmodel/keyvalue.hpp"
#include "objmodel/multisession.hpp"
#include "objmodel/pipeline.hpp"
#include "objmodel/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace objmodel;

namespace {

constexpr int kOk = 0;
constexpr int kStageFailure = 1;
constexpr int kUsage = 2;

// Thrown for problems with the command line that CLI11 cannot see.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigOptions {
  std::string config_file;
  std::vector<std::string> sets;
};

void add_config_options(CLI::App* cmd, ConfigOptions& o) {
  cmd->add_option("--config", o.config_file, "key = value configuration file");
  cmd->add_option("--set", o.sets, "override one key, e.g. --set tracker.patch=11")->take_all();
}

// Base values, then the config file, then --set pairs, then stage flags.
KeyValues layered(KeyValues base, const ConfigOptions& o) {
  if (!o.config_file.empty()) {
    if (!fs::exists(o.config_file)) throw UsageError("config file not found: " + o.config_file);
    for (const auto& [k, v] : read_key_values(o.config_file)) base[k] = v;
  }
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    auto key = s.substr(0, eq), value = s.substr(eq + 1);
    base[key] = value;
  }
  return base;
}

KeyValues stored_config(const fs::path& work) {
  const fs::path p = work / "config.txt";
  return fs::exists(p) ? read_key_values(p) : KeyValues{};
}

void require_file(const std::string& path, const char* what) {
  if (path.empty() || !fs::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

void require_session(const std::string& work) {
  if (!fs::exists(fs::path(work) / "session.txt")) throw UsageError("not a session directory (run track first): " + work);
}

void log_line(const std::string& s) { std::cout << s << std::endl; }

PipelineConfig finish(KeyValues kv) {
  PipelineConfig c = config_from_key_values(kv);
  c.validate();
  return c;
}

void print_hash(const PipelineConfig& c, Stage s) {
  std::cout << stage_name(s) << ": config hash " << stage_hash(c, s) << std::endl;
}

Pose parse_pose(const std::string& text) {
  std::istringstream ss(text);
  double v[7];
  for (auto& x : v)
    if (!(ss >> x)) throw UsageError("--registration expects 'tx ty tz qx qy qz qw'");
  const Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
  if (std::abs(q.norm() - 1.0) > 1e-3) throw UsageError("--registration quaternion is not unit length");
  return Pose::from_quaternion(q.normalized(), Eigen::Vector3d(v[0], v[1], v[2]));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object model reconstruction from RGB-D sequences"};
  app.require_subcommand(1);

  std::string work, sequence, out, report, mesh_path, cloud_path, scene_path, groundtruth, registration, roi_text, mode;
  std::vector<std::string> sessions;
  int select = -1, iterations = -1;
  long long frame_id = -1;
  double overlap_min = -1, theta_max = -1, sigma_lateral = -1, fusion_radius = -1;
  bool align = false;
  ConfigOptions copt;

  auto* synth_cmd = app.add_subcommand("synth", "render a synthetic RGB-D sequence from a scene file");
  synth_cmd->add_option("--scene", scene_path, "scene description (key = value)")->required();
  synth_cmd->add_option("--out", out, "output directory")->required();

  auto* track = app.add_subcommand("track", "estimate camera poses and keyframes");
  track->add_option("--sequence", sequence, "sequence manifest")->required();
  track->add_option("--work", work, "session directory")->required();
  add_config_options(track, copt);

  auto* segment = app.add_subcommand("segment", "object pixels per keyframe");
  segment->add_option("--work", work, "session directory")->required();
  segment->add_option("--mode", mode, "planes or roi")->check(CLI::IsMember({"planes", "roi"}));
  segment->add_option("--select", select, "hypothesis id (planes mode)");
  segment->add_option("--roi", roi_text, "x0,y0,z0,x1,y1,z1 in model coordinates (roi mode)");
  add_config_options(segment, copt);

  auto* refine = app.add_subcommand("refine", "multi-view ICP over keyframes");
  refine->add_option("--work", work, "session directory")->required();
  refine->add_option("--iterations", iterations, "iteration cap");
  refine->add_option("--overlap-min", overlap_min, "minimum view overlap for an edge");
  add_config_options(refine, copt);

  auto* post = app.add_subcommand("postprocess", "noise weights and fusion into the final cloud");
  post->add_option("--work", work, "session directory")->required();
  post->add_option("--theta-max", theta_max, "degrees");
  post->add_option("--sigma-lateral", sigma_lateral, "meters");
  post->add_option("--fusion-radius", fusion_radius, "meters");
  add_config_options(post, copt);

  auto* run = app.add_subcommand("run", "all stages in order, resuming completed ones");
  run->add_option("--sequence", sequence, "sequence manifest")->required();
  run->add_option("--work", work, "session directory")->required();
  add_config_options(run, copt);

  auto* exp = app.add_subcommand("export", "write the model bundle of a session");
  exp->add_option("--work", work, "session directory")->required();
  exp->add_option("--out", out, "bundle directory")->required();

  auto* merge = app.add_subcommand("merge", "align partial models of several sessions");
  merge->add_option("--sessions", sessions, "session clouds (first one fixes the frame)")->required();
  merge->add_option("--out", out, "merged cloud")->required();
  merge->add_option("--report", report, "merge report");
  add_config_options(merge, copt);

  auto* eval = app.add_subcommand("eval", "distance statistics of a cloud against a reference mesh");
  eval->add_option("--cloud", cloud_path, "reconstructed cloud")->required();
  eval->add_option("--mesh", mesh_path, "reference mesh (OBJ)")->required();
  eval->add_option("--report", report, "report file")->required();
  eval->add_option("--groundtruth", groundtruth, "camera-to-world trajectory; the model frame is its first entry");
  eval->add_option("--frame-id", frame_id, "use this frame of --groundtruth instead of the first");
  eval->add_option("--registration", registration, "mesh <- cloud pose 'tx ty tz qx qy qz qw'");
  eval->add_flag("--align", align, "find the registration automatically");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (synth_cmd->parsed()) {
      require_file(scene_path, "scene file");
      const auto scene = synth::load_scene(scene_path);
      const auto manifest = synth::render_sequence(scene, out);
      std::cout << "synth: " << scene.trajectory.size() << " frames -> " << manifest.string() << std::endl;
    } else if (track->parsed()) {
      require_file(sequence, "sequence manifest");
      const auto cfg = finish(layered({}, copt));
      print_hash(cfg, Stage::track);
      fs::create_directories(work);
      run_track(sequence, SessionStore(work), cfg, log_line);
    } else if (segment->parsed()) {
      require_session(work);
      auto kv = layered(stored_config(work), copt);
      if (!mode.empty()) kv["segment.mode"] = mode;
      if (select >= 0) kv["segment.select"] = std::to_string(select);
      if (!roi_text.empty()) {
        kv["segment.roi"] = roi_text;
        if (mode.empty()) kv["segment.mode"] = "roi";
      }
      const auto cfg = finish(kv);
      print_hash(cfg, Stage::segment);
      run_segment(SessionStore(work), cfg, log_line);
    } else if (refine->parsed()) {
      require_session(work);
      auto kv = layered(stored_config(work), copt);
      if (iterations >= 0) kv["refine.iterations"] = std::to_string(iterations);
      if (overlap_min >= 0) kv["refine.overlap_min"] = io::format_number(overlap_min);
      const auto cfg = finish(kv);
      print_hash(cfg, Stage::refine);
      run_refine(SessionStore(work), cfg, log_line);
    } else if (post->parsed()) {
      require_session(work);
      auto kv = layered(stored_config(work), copt);
      if (theta_max >= 0) kv["noise.theta_max_deg"] = io::format_number(theta_max);
      if (sigma_lateral >= 0) kv["noise.sigma_lateral"] = io::format_number(sigma_lateral);
      if (fusion_radius >= 0) kv["fusion.radius"] = io::format_number(fusion_radius);
      const auto cfg = finish(kv);
      print_hash(cfg, Stage::postprocess);
      run_postprocess(SessionStore(work), cfg, log_line);
    } else if (run->parsed()) {
      require_file(sequence, "sequence manifest");
      const auto cfg = finish(layered({}, copt));
      fs::create_directories(work);
      const auto ran = run_pipeline(sequence, SessionStore(work), cfg, [&](const std::string& s) {
        stage = s.substr(0, s.find(':'));
        log_line(s);
      });
      std::cout << "run: " << ran.size() << " stages executed" << std::endl;
    } else if (exp->parsed()) {
      require_session(work);
      const SessionStore store(work);
      const auto cfg = finish(stored_config(work));
      export_model_bundle(load_session(store), out, cfg.noise);
      std::cout << "export: bundle written to " << out << std::endl;
    } else if (merge->parsed()) {
      if (sessions.size() < 2) throw UsageError("merge needs at least 2 sessions");
      for (const auto& s : sessions) require_file(s, "session cloud");
      const auto cfg = finish(layered({}, copt));
      std::vector<ObjectCloud> clouds;
      for (const auto& s : sessions) clouds.push_back(io::read_cloud(s));
      const MergeResult result = merge_sessions(clouds, cfg.multisession);
      io::write_cloud(result.model, out);
      if (!report.empty()) write_merge_report(result, report);
      for (const auto& e : result.graph.edges)
        std::cout << "merge: pair " << e.source_session << "->" << e.target_session << " " << origin_name(e.origin)
                  << " quality " << e.quality << std::endl;
    } else if (eval->parsed()) {
      require_file(cloud_path, "cloud");
      require_file(mesh_path, "mesh");
      const int sources = (groundtruth.empty() ? 0 : 1) + (registration.empty() ? 0 : 1) + (align ? 1 : 0);
      if (sources > 1) throw UsageError("use only one of --groundtruth, --registration, --align");
      const ObjectCloud cloud = io::read_cloud(cloud_path);
      const TriangleMesh mesh = read_obj(mesh_path);
      Pose reg;
      if (!groundtruth.empty()) {
        require_file(groundtruth, "groundtruth trajectory");
        const auto traj = io::read_trajectory(groundtruth);
        if (traj.empty()) throw UsageError("groundtruth trajectory is empty");
        reg = traj.front().second;
        if (frame_id >= 0) {
          const auto it = std::find_if(traj.begin(), traj.end(), [&](const auto& p) { return p.first == frame_id; });
          if (it == traj.end()) throw UsageError("frame " + std::to_string(frame_id) + " not in groundtruth");
          reg = it->second;
        }
      } else if (!registration.empty()) {
        reg = parse_pose(registration);
      } else if (align) {
        reg = align_for_evaluation(cloud, mesh);
      }
      const auto rep = synth::evaluate_against_mesh(cloud, mesh, reg);
      synth::write_report(rep, report);
      std::printf("eval: mean %.4f mm, sigma %.4f mm, max %.4f mm over %zu points\n", rep.mean_mm, rep.sigma_mm,
                  rep.max_mm, rep.count);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: stage=" << stage << " kind=usage message=" << e.what() << std::endl;
    return kUsage;
  } catch (const InvalidInput& e) {
    std::cerr << "error: stage=" << stage << " kind=config message=" << e.what() << std::endl;
    return kUsage;
  } catch (const StageError& e) {
    std::cerr << "error: stage=" << stage << " kind=stage message=" << e.what() << std::endl;
    return kStageFailure;
  } catch (const EstimationError& e) {
    std::cerr << "error: stage=" << stage << " kind=estimation message=" << e.what() << std::endl;
    return kStageFailure;
  } catch (const IoError& e) {
    std::cerr << "error: stage=" << stage << " kind=io message=" << e.what() << std::endl;
    return kStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: stage=" << stage << " kind=internal message=" << e.what() << std::endl;
    return kStageFailure;
  }
  return kOk;
}
