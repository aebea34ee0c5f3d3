#pragma once

#include "objmodel/frame.hpp"
#include "objmodel/geometry.hpp"
#include "objmodel/postprocess.hpp"
#include "objmodel/tracking.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace objmodel {

struct IcpConfig {
  int iterations = 40;
  double convergence_eps = 1e-7;  // largest per-node update (rad or m) that counts as converged
  double gate_start_m = 0.02;
  double gate_factor = 0.7;
  int gate_every = 5;
  double gate_floor_m = 0.003;
  double normal_reject_deg = 30.0;
  double overlap_min = 0.3;
  double overlap_distance_m = 0.01;  // d_max
  int min_pairs = 20;
  int max_points = 1500;  // per view, after subsampling
  double min_weight = 0.5;  // noise-model weight a point needs to take part (excludes depth-edge points)

  void validate() const;
  /// Distance gate of schedule stage `stage`. A stage lasts gate_every
  /// iterations, or ends early once the poses stop moving.
  double gate(int stage) const;
};

/// One keyframe's object points in its own camera frame, with normals and
/// weights, plus its camera-to-model pose.
struct RefinementView {
  std::int64_t id = 0;
  Pose pose;
  ObjectCloud cloud;
};

struct Correspondence {
  int a = 0;  // point in the edge's first view
  int b = 0;  // point in the edge's second view
  double weight = 1.0;
};

struct ViewEdge {
  int i = 0, j = 0;
  double overlap_ij = 0.0;
  double overlap_ji = 0.0;
  std::vector<Correspondence> pairs;
};

struct ViewGraph {
  std::vector<RefinementView> nodes;
  std::vector<ViewEdge> edges;
};

/// Object points of each keyframe with normals and noise-model weights,
/// reduced to at most config.max_points per view by a regular stride. Points
/// with weight at or below config.min_weight are left out, as are keyframes
/// without object indices.
std::vector<RefinementView> make_refinement_views(const std::vector<Keyframe>& keyframes,
                                                  const CameraIntrinsics& intrinsics, const IcpConfig& config = {},
                                                  const NoiseModelParams& noise = {});

/// Fraction of `from` points whose nearest `to` point (both in model
/// coordinates) lies within `distance`.
double view_overlap(const RefinementView& from, const RefinementView& to, double distance);

/// Edges between views whose mutual overlap reaches overlap_min. Throws
/// StageError listing the components when the graph is not connected.
ViewGraph build_view_graph(std::vector<RefinementView> views, const IcpConfig& config = {});

struct IcpIteration {
  int iteration = 0;
  double gate_m = 0.0;
  std::size_t pairs = 0;
  double rms_before = 0.0;
  double rms_after = 0.0;
  double step = 0.0;  // line-search fraction of the solved update that was applied
};

struct IcpResult {
  std::vector<Pose> poses;
  std::vector<IcpIteration> log;
  std::vector<int> frozen;  // nodes that lacked correspondences in the last iteration
  std::vector<std::string> warnings;
  bool converged = false;
};

/// Joint point-to-plane ICP over all graph nodes. Every iteration recomputes
/// mutual nearest-neighbour pairs per edge under a shrinking distance gate,
/// solves one rigid update per node against all of its edges, and applies
/// the updates together (node 0 never moves). Graph poses are updated in place.
IcpResult multiview_icp(ViewGraph& graph, const IcpConfig& config = {});

/// Two-cloud ICP with the same correspondence rules and solver, moving
/// `source` onto the fixed `target`. `initial` maps source to target.
struct PairwiseIcpResult {
  Pose transform;
  std::vector<IcpIteration> log;
  std::size_t pairs = 0;
  bool converged = false;
};
PairwiseIcpResult pairwise_icp(const ObjectCloud& source, const ObjectCloud& target, const Pose& initial,
                               const IcpConfig& config = {});

/// Weighted point-to-plane RMS of a graph at its current poses (each pair
/// counted in both directions, on the current correspondence sets).
double graph_rms(const ViewGraph& graph);

}  // namespace objmodel
