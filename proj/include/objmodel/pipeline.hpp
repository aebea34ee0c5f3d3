#pragma once

#include "objmodel/keyvalue.hpp"
#include "objmodel/multisession.hpp"
#include "objmodel/postprocess.hpp"
#include "objmodel/refinement.hpp"
#include "objmodel/segmentation.hpp"
#include "objmodel/tracking.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace objmodel {

struct PipelineConfig {
  TrackerConfig tracker;
  bool tracker_refine = true;  // keyframe-to-frame patch refinement
  SegmentationConfig segmentation;
  std::string segment_mode = "planes";  // planes | roi
  int select = 0;                       // hypothesis id in the first keyframe (planes mode)
  std::optional<RegionOfInterest> roi;  // model coordinates (roi mode)
  IcpConfig refinement;
  NoiseModelParams noise;
  FusionConfig fusion;
  MultisessionConfig multisession;
  std::uint64_t seed = 1;  // copied into every module seed unless that seed is set explicitly

  /// Throws InvalidInput naming the first parameter out of range.
  void validate() const;
};

/// Dotted "module.parameter" keys (tracker.patch = 11). Unknown keys and
/// unparsable values throw InvalidInput.
PipelineConfig config_from_key_values(const KeyValues& kv);
/// Every key with its current value; config_from_key_values inverts it.
KeyValues config_to_key_values(const PipelineConfig& config);

enum class Stage { track, segment, refine, postprocess };
inline constexpr Stage kStages[] = {Stage::track, Stage::segment, Stage::refine, Stage::postprocess};
const char* stage_name(Stage stage);
std::optional<Stage> parse_stage(const std::string& name);

/// Hash (16 hex digits) of the parameters that `stage` and all earlier
/// stages depend on.
std::string stage_hash(const PipelineConfig& config, Stage stage);

/// One modelling session on disk:
///   session.txt            sequence manifest path
///   config.txt             configuration of the last stage run
///   stages.txt             "stage hash" per completed stage
///   timings.txt            "stage seconds" (informational)
///   track/                 trajectory.txt, keyframes.txt, failed.txt
///   segment/               hypotheses.txt, indices/kf_NNNN.txt
///   refine/                poses.txt, residuals.txt
///   postprocess/           fused.cloud, stats.txt
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root) : root_(std::move(root)) {}
  const std::filesystem::path& root() const { return root_; }

  std::optional<std::string> recorded_hash(Stage stage) const;
  /// Stage completed with this config and its outputs still exist.
  bool up_to_date(Stage stage, const PipelineConfig& config) const;
  std::filesystem::path sequence() const;

  /// Refuses (InvalidInput) when an earlier stage was produced under a
  /// different configuration; StageError when an earlier stage is missing.
  void check_prerequisites(Stage stage, const PipelineConfig& config) const;

 private:
  std::filesystem::path root_;
};

using PipelineLog = std::function<void(const std::string&)>;

void run_track(const std::filesystem::path& manifest, const SessionStore& store, const PipelineConfig& config,
               const PipelineLog& log = {});
void run_segment(const SessionStore& store, const PipelineConfig& config, const PipelineLog& log = {});
void run_refine(const SessionStore& store, const PipelineConfig& config, const PipelineLog& log = {});
void run_postprocess(const SessionStore& store, const PipelineConfig& config, const PipelineLog& log = {});
void run_stage(Stage stage, const SessionStore& store, const PipelineConfig& config, const PipelineLog& log = {});

/// All stages in order, skipping those already completed under the same
/// configuration (resume). Returns the stages that actually ran.
std::vector<Stage> run_pipeline(const std::filesystem::path& manifest, const SessionStore& store,
                                const PipelineConfig& config, const PipelineLog& log = {});

/// Keyframes (images reloaded from the sequence) with the newest poses and
/// object indices, plus the fused cloud once post-processing has run.
struct SessionModel {
  CameraIntrinsics intrinsics;
  std::vector<Keyframe> keyframes;
  ObjectCloud fused;
  KeyValues config;
  bool postprocessed = false;
};
SessionModel load_session(const SessionStore& store);

/// Bundle directory: manifest.txt, fused.cloud, views/view_NNNN.cloud
/// (keyframe camera coordinates, restricted to I^k), views/poses.txt,
/// intrinsics.txt. Throws StageError when the session is incomplete.
void export_model_bundle(const SessionModel& session, const std::filesystem::path& out,
                         const NoiseModelParams& noise = {});

/// Object observations of every keyframe with noise weights, ready for fusion.
std::vector<WeightedView> weighted_views(const SessionModel& session, const NoiseModelParams& noise);

}  // namespace objmodel
