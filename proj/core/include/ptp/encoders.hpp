#pragma once

#include <array>
#include <span>
#include <vector>

#include "ptp/autodiff.hpp"
#include "ptp/scene.hpp"

namespace ptp {

inline constexpr std::size_t kFeatureDim = 64;
inline constexpr std::size_t kBoxFeatureDim = 7;
// Positions are divided by this before entering the networks.
inline constexpr double kPositionScale = 10.0;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Associated boxes of one tracked object, oldest first. Only valid frames
// are stored; they form the most recent suffix of the H-frame window.
struct PastTrajectory {
  int id = 0;
  std::vector<Box> states;

  const Box& last() const { return states.back(); }
  // 1 for valid slots of an H-frame window, right-aligned.
  std::vector<bool> mask(std::size_t history) const;
};

// [x - rx, y - ry, z - rz, l, w, h, wrapped theta]. Identity is never a feature.
std::array<double, kBoxFeatureDim> normalize_inputs(const Box& box, const Point3& reference);

// "enc.track.*" (two stacked LSTM cells) and "enc.det.*" (two linear layers).
void init_encoder_params(ParamStore& store, Rng& rng);

// M x 64: final top-layer hidden state of a 2-layer LSTM run over each
// trajectory's valid frames. Throws ContractError on an empty trajectory.
Var encode_tracks(Tape& tape, const ParamStore& store, std::span<const PastTrajectory> tracks,
                  std::size_t history, const Point3& reference = {});

// N x 64: MLP 7 -> 64 -> 64 with ReLU between the layers.
Var encode_detections(Tape& tape, const ParamStore& store, std::span<const Box> detections,
                      const Point3& reference = {});

}  // namespace ptp
