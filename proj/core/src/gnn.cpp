#include "ptp/gnn.hpp"

#include <cmath>
#include <string>

#include "ptp/errors.hpp"
#include "ptp/layers.hpp"

namespace ptp {

namespace {

double distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::string sigma_prefix(std::size_t layer, int which) {
  return "gnn.layer" + std::to_string(layer) + ".sigma" + std::to_string(which);
}

}  // namespace

bool InteractionGraph::connected(std::size_t track, std::size_t det) const {
  for (const auto& [i, j] : track_det)
    if (i == track && j == det) return true;
  return false;
}

InteractionGraph build_graph(std::span<const Point3> tracks, std::span<const Point3> dets,
                             double threshold) {
  if (!(threshold > 0.0)) throw ContractError("build_graph: threshold must be positive");
  InteractionGraph g;
  g.num_tracks = tracks.size();
  g.num_dets = dets.size();
  g.threshold = threshold;
  for (std::size_t i = 0; i < tracks.size(); ++i)
    for (std::size_t k = i + 1; k < tracks.size(); ++k)
      if (distance(tracks[i], tracks[k]) < threshold) g.track_track.emplace_back(i, k);
  for (std::size_t j = 0; j < dets.size(); ++j)
    for (std::size_t k = j + 1; k < dets.size(); ++k)
      if (distance(dets[j], dets[k]) < threshold) g.det_det.emplace_back(j, k);
  for (std::size_t i = 0; i < tracks.size(); ++i)
    for (std::size_t j = 0; j < dets.size(); ++j)
      if (distance(tracks[i], dets[j]) < threshold) g.track_det.emplace_back(i, j);
  return g;
}

Point3 node_position(const PastTrajectory& track) {
  const Box& b = track.last();
  return {b.x, b.y, b.z};
}

Point3 node_position(const Box& det) { return {det.x, det.y, det.z}; }

void init_gnn_params(ParamStore& store, std::size_t layers, Rng& rng, std::size_t dim) {
  for (std::size_t l = 0; l < layers; ++l)
    for (int s = 1; s <= 3; ++s) add_linear(store, sigma_prefix(l, s), dim, dim, rng);
}

NodeFeatures propagate(Tape& tape, const ParamStore& store, const InteractionGraph& graph,
                       NodeFeatures input, std::size_t layers) {
  const std::size_t m = graph.num_tracks;
  const std::size_t n = graph.num_dets;
  if (layers == 0) return input;
  if (input.tracks.rows() != m || input.dets.rows() != n) {
    throw DimensionError("propagate: node feature rows do not match the graph");
  }

  // Directed message lists over the stacked node index space.
  std::vector<std::size_t> cross_src, cross_dst, same_src, same_dst;
  for (const auto& [i, j] : graph.track_det) {
    cross_src.push_back(m + j);
    cross_dst.push_back(i);
    cross_src.push_back(i);
    cross_dst.push_back(m + j);
  }
  for (const auto& [a, b] : graph.track_track) {
    same_src.push_back(a);
    same_dst.push_back(b);
    same_src.push_back(b);
    same_dst.push_back(a);
  }
  for (const auto& [a, b] : graph.det_det) {
    same_src.push_back(m + a);
    same_dst.push_back(m + b);
    same_src.push_back(m + b);
    same_dst.push_back(m + a);
  }

  const Var stacked[] = {input.tracks, input.dets};
  Var x = concat_rows(stacked);
  for (std::size_t l = 0; l < layers; ++l) {
    Var next = linear(tape, store, sigma_prefix(l, 1), x);
    if (!cross_src.empty()) {
      Var msg = gather_rows(linear(tape, store, sigma_prefix(l, 2), x), cross_src);
      next = next + segment_sum(msg, cross_dst, m + n);
    }
    if (!same_src.empty()) {
      Var msg = gather_rows(linear(tape, store, sigma_prefix(l, 3), x), same_src);
      next = next + segment_sum(msg, same_dst, m + n);
    }
    x = (l + 1 < layers) ? relu(next) : next;
  }
  return {slice_rows(x, 0, m), slice_rows(x, m, m + n)};
}

Var edge_features(const NodeFeatures& features, const InteractionGraph& graph) {
  std::vector<std::size_t> rows, cols;
  rows.reserve(graph.track_det.size());
  cols.reserve(graph.track_det.size());
  for (const auto& [i, j] : graph.track_det) {
    rows.push_back(i);
    cols.push_back(j);
  }
  return gather_rows(features.tracks, rows) - gather_rows(features.dets, cols);
}

}  // namespace ptp
