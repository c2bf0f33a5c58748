#include "ptp/mot.hpp"

#include <algorithm>
#include <limits>

#include "ptp/errors.hpp"
#include "ptp/layers.hpp"

namespace ptp {

void init_mot_params(ParamStore& store, Rng& rng, std::size_t dim) {
  add_linear(store, "mot.sigma3", dim, dim, rng);
  add_linear(store, "mot.sigma4", dim, 1, rng);
}

Var affinity(Tape& tape, const ParamStore& store, Var edge_feats, const InteractionGraph& graph) {
  const std::size_t m = graph.num_tracks;
  const std::size_t n = graph.num_dets;
  if (graph.track_det.empty()) return tape.constant(NumArray(m, n));
  if (edge_feats.rows() != graph.track_det.size()) {
    throw DimensionError("affinity: edge feature rows do not match track-det edges");
  }
  Var hidden = relu(linear(tape, store, "mot.sigma3", edge_feats));
  Var scores = sigmoid(linear(tape, store, "mot.sigma4", hidden));
  std::vector<std::size_t> flat;
  flat.reserve(graph.track_det.size());
  for (const auto& [i, j] : graph.track_det) flat.push_back(i * n + j);
  return reshape(segment_sum(scores, std::move(flat), m * n), m, n);
}

NumArray gt_affinity(std::span<const int> track_ids, std::span<const int> det_source_ids) {
  NumArray g(track_ids.size(), det_source_ids.size());
  for (std::size_t i = 0; i < track_ids.size(); ++i)
    for (std::size_t j = 0; j < det_source_ids.size(); ++j)
      if (det_source_ids[j] >= 0 && det_source_ids[j] == track_ids[i]) g(i, j) = 1.0;
  return g;
}

AffinityLoss affinity_loss(Tape& tape, Var a, const NumArray& gt) {
  if (!a.value().same_shape(gt)) throw DimensionError("affinity_loss: A and A^g shapes differ");
  const std::size_t m = gt.rows();
  const std::size_t n = gt.cols();
  if (m == 0 || n == 0) {
    Var zero = tape.constant(NumArray::scalar(0.0));
    return {zero, zero, zero};
  }

  Var clamped = clamp(a, kAffinityClamp, 1.0 - kAffinityClamp);
  Var target = tape.constant(gt);
  NumArray not_gt = gt;
  for (auto& v : not_gt.data()) v = 1.0 - v;
  Var log_p = log(clamped);
  Var log_q = log(add_scalar(scale(clamped, -1.0), 1.0));
  Var bce = scale(mean(target * log_p + tape.constant(std::move(not_gt)) * log_q), -1.0);

  NumArray row_hot(m, 1), col_hot(1, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      row_hot(i, 0) += gt(i, j);
      col_hot(0, j) += gt(i, j);
    }
  for (auto& v : row_hot.data()) v = v == 1.0 ? 1.0 : 0.0;
  for (auto& v : col_hot.data()) v = v == 1.0 ? 1.0 : 0.0;

  Var e = exp(clamped);
  Var hot = clamped * target;
  Var rows = (log(row_sum(e)) - row_sum(hot)) * tape.constant(std::move(row_hot));
  Var cols = (log(col_sum(e)) - col_sum(hot)) * tape.constant(std::move(col_hot));
  Var ce = scale(sum(rows), 1.0 / static_cast<double>(n)) + scale(sum(cols), 1.0 / static_cast<double>(m));
  return {bce + ce, bce, ce};
}

std::vector<int> hungarian_max(const NumArray& weights) {
  const std::size_t rows = weights.rows();
  const std::size_t cols = weights.cols();
  const std::size_t n = std::max(rows, cols);
  std::vector<int> assignment(rows, -1);
  if (rows == 0 || cols == 0) return assignment;

  // Shortest augmenting path with potentials on cost = -weight, 1-indexed.
  auto cost = [&](std::size_t i, std::size_t j) -> double {
    return (i < rows && j < cols) ? -weights(i, j) : 0.0;
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j];
    if (i >= 1 && i <= rows && j <= cols) assignment[i - 1] = static_cast<int>(j - 1);
  }
  return assignment;
}

Association associate(const NumArray& a, double accept_threshold) {
  Association out;
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<bool> det_used(n, false);
  const auto assignment = hungarian_max(a);
  for (std::size_t i = 0; i < m; ++i) {
    const int j = assignment[i];
    if (j >= 0 && a(i, static_cast<std::size_t>(j)) >= accept_threshold) {
      out.matches.emplace_back(i, static_cast<std::size_t>(j));
      det_used[static_cast<std::size_t>(j)] = true;
    } else {
      out.unmatched_tracks.push_back(i);
    }
  }
  for (std::size_t j = 0; j < n; ++j)
    if (!det_used[j]) out.unmatched_dets.push_back(j);
  return out;
}

Box extrapolate_constant_velocity(const PastTrajectory& past) {
  if (past.states.empty()) throw ContractError("extrapolate: empty trajectory");
  Box next = past.last();
  if (past.states.size() >= 2) {
    const Box& prev = past.states[past.states.size() - 2];
    next.x += next.x - prev.x;
    next.y += next.y - prev.y;
    next.z += next.z - prev.z;
  }
  return next;
}

void Tracker::step(std::span<const Detection> detections, const Association& association) {
  std::vector<int> track_hits(tracks_.size(), 0);
  std::vector<int> det_hits(detections.size(), 0);
  for (const auto& [i, j] : association.matches) {
    if (i >= tracks_.size() || j >= detections.size()) throw ContractError("tracker: match index out of range");
    if (++track_hits[i] > 1) throw ContractError("tracker: track matched twice");
    if (++det_hits[j] > 1) throw ContractError("tracker: detection matched twice");
  }
  ++frame_count_;

  auto push_state = [&](PastTrajectory& past, const Box& box) {
    past.states.push_back(box);
    if (past.states.size() > config_.history) past.states.erase(past.states.begin());
  };

  for (const auto& [i, j] : association.matches) {
    TrackState& t = tracks_[i];
    push_state(t.past, detections[j].box);
    t.miss_count = 0;
    t.hit_streak += 1;
    t.score = detections[j].confidence;
    t.updated = true;
    if (t.status == TrackStatus::kTentative && t.hit_streak >= config_.min_hits) {
      t.status = TrackStatus::kConfirmed;
    }
  }
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    if (track_hits[i] != 0) continue;
    TrackState& t = tracks_[i];
    push_state(t.past, extrapolate_constant_velocity(t.past));
    t.miss_count += 1;
    t.hit_streak = 0;
    t.updated = false;
    if (t.miss_count > config_.max_age) t.status = TrackStatus::kDead;
  }
  std::erase_if(tracks_, [](const TrackState& t) { return t.status == TrackStatus::kDead; });

  for (std::size_t j = 0; j < detections.size(); ++j) {
    if (det_hits[j] != 0) continue;
    TrackState t;
    t.id = next_id_++;
    t.past.id = t.id;
    t.past.states.push_back(detections[j].box);
    t.hit_streak = 1;
    t.score = detections[j].confidence;
    t.updated = true;
    t.status = config_.min_hits <= 1 ? TrackStatus::kConfirmed : TrackStatus::kTentative;
    tracks_.push_back(std::move(t));
  }
}

std::vector<const TrackState*> Tracker::reportable() const {
  std::vector<const TrackState*> out;
  for (const auto& t : tracks_) {
    if (!t.updated) continue;
    if (t.status == TrackStatus::kConfirmed || frame_count_ <= config_.min_hits) out.push_back(&t);
  }
  return out;
}

}  // namespace ptp
