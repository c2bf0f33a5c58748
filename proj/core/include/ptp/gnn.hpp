#pragma once

#include <span>
#include <utility>
#include <vector>

#include "ptp/autodiff.hpp"
#include "ptp/encoders.hpp"

namespace ptp {

// Nodes 0..M-1 are tracked objects, M..M+N-1 detections (indexed locally
// within each edge list). An edge exists iff the 3D center distance < C.
struct InteractionGraph {
  std::size_t num_tracks = 0;
  std::size_t num_dets = 0;
  double threshold = 10.0;
  std::vector<std::pair<std::size_t, std::size_t>> track_track;  // i < g
  std::vector<std::pair<std::size_t, std::size_t>> det_det;      // j < g
  std::vector<std::pair<std::size_t, std::size_t>> track_det;    // (track i, det j)

  std::size_t edge_count() const { return track_track.size() + det_det.size() + track_det.size(); }
  bool connected(std::size_t track, std::size_t det) const;
};

InteractionGraph build_graph(std::span<const Point3> track_positions,
                             std::span<const Point3> det_positions, double threshold);

// Tracked node position: center of the most recent valid frame.
Point3 node_position(const PastTrajectory& track);
Point3 node_position(const Box& det);

struct NodeFeatures {
  Var tracks;  // M x 64
  Var dets;    // N x 64
};

// "gnn.layer{l}.sigma{1,2,3}.*", one weight set per layer shared by both node types.
void init_gnn_params(ParamStore& store, std::size_t layers, Rng& rng,
                     std::size_t dim = kFeatureDim);

// L rounds of u' = s1(u) + sum_dets s2(v) + sum_tracks s3(u'') (and the mirror
// rule for detections); ReLU after every layer except the last.
NodeFeatures propagate(Tape& tape, const ParamStore& store, const InteractionGraph& graph,
                       NodeFeatures input, std::size_t layers);

// One row per track-det edge, in graph.track_det order: u_i - v_j.
Var edge_features(const NodeFeatures& features, const InteractionGraph& graph);

}  // namespace ptp
