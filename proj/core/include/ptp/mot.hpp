#pragma once

#include <span>
#include <utility>
#include <vector>

#include "ptp/autodiff.hpp"
#include "ptp/encoders.hpp"
#include "ptp/gnn.hpp"

namespace ptp {

// "mot.sigma3.*" (64 -> 64) and "mot.sigma4.*" (64 -> 1).
void init_mot_params(ParamStore& store, Rng& rng, std::size_t dim = kFeatureDim);

// Dense M x N affinity. Pairs without a track-det edge are exactly 0.
Var affinity(Tape& tape, const ParamStore& store, Var edge_feats, const InteractionGraph& graph);

// A^g from identities: 1 where the detection was sampled from the track's object.
NumArray gt_affinity(std::span<const int> track_ids, std::span<const int> det_source_ids);

inline constexpr double kAffinityClamp = 1e-7;

struct AffinityLoss {
  Var total;
  Var bce;
  Var ce;
};

// L_bce (mean over all M*N entries) + L_ce (sum over one-hot rows and columns
// of the softmax cross entropy along that row/column, averaged over its length).
AffinityLoss affinity_loss(Tape& tape, Var affinity, const NumArray& gt);

// Maximum-weight assignment of a rectangular matrix. Returns, per row, the
// matched column or -1. Rows/columns are padded with zeros to a square.
std::vector<int> hungarian_max(const NumArray& weights);

struct Association {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track, det)
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_dets;
};

Association associate(const NumArray& affinity, double accept_threshold);

enum class TrackStatus { kTentative, kConfirmed, kDead };

struct TrackState {
  int id = 0;
  PastTrajectory past;
  int hit_streak = 0;
  int miss_count = 0;
  TrackStatus status = TrackStatus::kTentative;
  double score = 0.0;       // confidence of the last associated detection
  bool updated = false;     // matched in the latest step
};

struct TrackerConfig {
  int min_hits = 3;         // F_min
  int max_age = 2;          // Age_max
  std::size_t history = 10; // H
};

// Birth/death bookkeeping around an association result.
class Tracker {
 public:
  explicit Tracker(TrackerConfig config) : config_(config) {}

  // Live (non-dead) tracks, in creation order.
  const std::vector<TrackState>& tracks() const { return tracks_; }
  const TrackerConfig& config() const { return config_; }
  int frame_count() const { return frame_count_; }

  // Matched tracks absorb their detection; unmatched detections start
  // tentative tracks; unmatched tracks coast at constant velocity and die
  // once their miss count exceeds max_age. Throws ContractError when a
  // detection or track appears in more than one match.
  void step(std::span<const Detection> detections, const Association& association);

  // Tracks to report for the latest frame: matched this step and confirmed,
  // or matched while the scene is still within its first min_hits frames.
  std::vector<const TrackState*> reportable() const;

 private:
  TrackerConfig config_;
  std::vector<TrackState> tracks_;
  int next_id_ = 1;
  int frame_count_ = 0;
};

Box extrapolate_constant_velocity(const PastTrajectory& past);

}  // namespace ptp
