#pragma once

#include "objmodel/geometry.hpp"
#include "objmodel/mesh.hpp"
#include "objmodel/refinement.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace objmodel {

enum class CandidateOrigin { feature, stable_plane, given };
const char* origin_name(CandidateOrigin origin);

/// Alignment hypothesis mapping the source session's model into the target's.
/// fsv, overlap and quality are filled in by scoring, never by hand.
struct RegistrationCandidate {
  int source_session = 0;
  int target_session = 0;
  Pose transform;
  double fsv_ratio = std::numeric_limits<double>::infinity();
  double overlap_ratio = 0.0;
  double quality = 0.0;
  CandidateOrigin origin = CandidateOrigin::given;
};

struct MultisessionConfig {
  double assoc_distance_m = 0.01;    // d_assoc
  double surface_epsilon_m = 0.005;  // eps_surf
  double fsv_scale = 0.05;           // fsv_0
  double overlap_floor = 0.25;

  // stable planes
  int yaw_samples = 12;
  double min_face_fraction = 0.05;  // of the total hull area
  double face_merge_deg = 10.0;     // hull triangles within this angle form one face
  double face_merge_m = 0.005;
  int hull_points = 3000;

  // features
  double keypoint_spacing_m = 0.01;
  double descriptor_voxel_m = 0.005;
  double descriptor_radius_m = 0.025;
  double ratio_test = 0.8;
  double consensus_m = 0.01;
  int ransac_iterations = 2000;
  int min_consensus = 12;
  int max_candidates = 5;  // N_c

  // scoring
  int coarse_points = 1500;  // clouds are thinned to this for the first ICP/score pass
  int refine_best = 4;       // candidates per pair that get full-resolution ICP
  std::uint64_t seed = 1;
  IcpConfig icp = default_icp();

  void validate() const;
  static IcpConfig default_icp();
};

/// Convex-hull face an object can rest on: outward normal, supporting plane
/// n.x = offset, area, and the centroid of the face's hull vertices.
struct StablePlane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;
  double area = 0.0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
};

/// Merged hull faces with at least min_face_fraction of the hull area whose
/// plane contains the projection of the cloud centroid inside the face.
/// Sorted by area. Throws EstimationError for a degenerate hull.
std::vector<StablePlane> stable_planes(const ObjectCloud& cloud, const MultisessionConfig& config = {});

/// Plane-pair alignments: source plane normal turned onto the target plane
/// normal, planes made coincident, in-plane centroids matched, then
/// yaw_samples rotations about the normal. Unscored. Empty when either hull
/// is degenerate.
std::vector<RegistrationCandidate> candidates_from_stable_planes(const ObjectCloud& source, const ObjectCloud& target,
                                                                 const MultisessionConfig& config = {});

/// Local shape descriptors on keypoints, ratio-tested matches and RANSAC
/// consensus; up to max_candidates unscored hypotheses, possibly none.
std::vector<RegistrationCandidate> candidates_from_features(const ObjectCloud& source, const ObjectCloud& target,
                                                            const MultisessionConfig& config = {});

/// Ratio of transformed source points in front of the target surface to
/// points on it. A source point is associated with its nearest target point
/// when it lies within assoc_distance_m of that point's tangent line of sight
/// (sideways distance); its offset along the target normal decides: on the
/// surface within +-surface_epsilon_m, in front beyond +surface_epsilon_m.
/// Returns infinity when no point is on the surface.
double fsv_ratio(const ObjectCloud& source, const ObjectCloud& target, const Pose& transform,
                 const MultisessionConfig& config = {});

/// Fraction of the smaller cloud with a neighbour in the other within assoc_distance_m.
double overlap_ratio(const ObjectCloud& source, const ObjectCloud& target, const Pose& transform,
                     const MultisessionConfig& config = {});

/// overlap * exp(-fsv / fsv_scale), or 0 below the overlap floor.
double candidate_quality(double fsv, double overlap, const MultisessionConfig& config = {});

/// Fill fsv (symmetric maximum), overlap and quality for the candidate's transform.
RegistrationCandidate score_alignment(RegistrationCandidate candidate, const ObjectCloud& source,
                                      const ObjectCloud& target, const MultisessionConfig& config = {});

/// Pairwise ICP from the candidate's transform, then score_alignment.
RegistrationCandidate score_candidate(RegistrationCandidate candidate, const ObjectCloud& source,
                                      const ObjectCloud& target, const MultisessionConfig& config = {});

/// Best scored candidate over both generators (plus identity) for one pair.
/// Candidates are first refined and scored on thinned clouds; the best
/// refine_best are then refined and scored at full resolution.
RegistrationCandidate best_candidate(const ObjectCloud& source, const ObjectCloud& target,
                                     const MultisessionConfig& config = {}, bool use_features = true,
                                     bool use_planes = true);

struct SessionGraph {
  int vertex_count = 0;
  std::vector<RegistrationCandidate> edges;  // best candidate per pair
  std::vector<std::size_t> mst_edges;        // indices into edges
};

/// Maximum-quality spanning forest (Kruskal). Edges with quality <= 0 are
/// ignored; ties go to the lower pair.
std::vector<std::size_t> maximum_spanning_tree(int vertex_count, const std::vector<RegistrationCandidate>& edges);

/// Pose of every vertex in vertex 0's frame by concatenating tree edge
/// transforms (an edge maps its source session into its target session).
std::vector<Pose> tree_poses(int vertex_count, const std::vector<RegistrationCandidate>& edges,
                             const std::vector<std::size_t>& tree);

struct MergeResult {
  SessionGraph graph;
  std::vector<Pose> poses;  // session -> first session
  ObjectCloud model;        // union of all sessions in the first session's frame
};

/// Align t >= 2 partial models. Throws InvalidInput for t < 2 and StageError
/// naming the components when the quality graph is disconnected.
MergeResult merge_sessions(const std::vector<ObjectCloud>& sessions, const MultisessionConfig& config = {});

/// Per-pair best candidates and the chosen tree edges as text.
void write_merge_report(const MergeResult& result, const std::filesystem::path& path);

/// Registration of a reconstructed cloud onto a reference mesh (mesh frame
/// <- cloud frame) by coarse candidates plus ICP against mesh samples.
/// Throws EstimationError when the best quality is below the floor.
Pose align_for_evaluation(const ObjectCloud& cloud, const TriangleMesh& mesh, const MultisessionConfig& config = {});

}  // namespace objmodel
