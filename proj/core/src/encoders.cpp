#include "ptp/encoders.hpp"

#include "ptp/errors.hpp"
#include "ptp/layers.hpp"

namespace ptp {

std::vector<bool> PastTrajectory::mask(std::size_t history) const {
  std::vector<bool> m(history, false);
  const std::size_t valid = std::min(history, states.size());
  for (std::size_t k = history - valid; k < history; ++k) m[k] = true;
  return m;
}

std::array<double, kBoxFeatureDim> normalize_inputs(const Box& b, const Point3& ref) {
  return {b.x - ref.x, b.y - ref.y, b.z - ref.z, b.l, b.w, b.h, wrap_angle(b.theta)};
}

void init_encoder_params(ParamStore& store, Rng& rng) {
  add_lstm_cell(store, "enc.track.lstm0", kBoxFeatureDim, kFeatureDim, rng);
  add_lstm_cell(store, "enc.track.lstm1", kFeatureDim, kFeatureDim, rng);
  add_linear(store, "enc.det.fc0", kBoxFeatureDim, kFeatureDim, rng);
  add_linear(store, "enc.det.fc1", kFeatureDim, kFeatureDim, rng);
}

namespace {

void write_features(NumArray& out, std::size_t row, const Box& b, const Point3& ref) {
  const auto f = normalize_inputs(b, ref);
  for (std::size_t c = 0; c < kBoxFeatureDim; ++c) out(row, c) = f[c];
  for (std::size_t c = 0; c < 3; ++c) out(row, c) /= kPositionScale;
}

}  // namespace

Var encode_tracks(Tape& tape, const ParamStore& store, std::span<const PastTrajectory> tracks,
                  std::size_t history, const Point3& reference) {
  if (history == 0) throw ContractError("encode_tracks: history must be >= 1");
  const std::size_t m = tracks.size();
  for (const auto& t : tracks) {
    if (t.states.empty()) throw ContractError("encode_tracks: track " + std::to_string(t.id) + " has no valid frame");
  }
  if (m == 0) return tape.constant(NumArray(0, kFeatureDim));

  LstmState lower{tape.constant(NumArray(m, kFeatureDim)), tape.constant(NumArray(m, kFeatureDim))};
  LstmState upper = lower;
  for (std::size_t step = 0; step < history; ++step) {
    NumArray x(m, kBoxFeatureDim);
    NumArray mask(m, kFeatureDim);
    std::size_t valid = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& states = tracks[i].states;
      const std::size_t len = std::min(history, states.size());
      if (step + len < history) continue;
      const std::size_t offset = states.size() - len;
      write_features(x, i, states[offset + step + len - history], reference);
      for (std::size_t c = 0; c < kFeatureDim; ++c) mask(i, c) = 1.0;
      ++valid;
    }
    if (valid == 0) continue;
    Var xin = tape.constant(std::move(x));
    LstmState l1 = lstm_step(tape, store, "enc.track.lstm0", xin, lower);
    LstmState l2 = lstm_step(tape, store, "enc.track.lstm1", l1.h, upper);
    if (valid == m) {
      lower = l1;
      upper = l2;
    } else {
      lower = {masked_update(tape, l1.h, lower.h, mask), masked_update(tape, l1.c, lower.c, mask)};
      upper = {masked_update(tape, l2.h, upper.h, mask), masked_update(tape, l2.c, upper.c, mask)};
    }
  }
  return upper.h;
}

Var encode_detections(Tape& tape, const ParamStore& store, std::span<const Box> detections,
                      const Point3& reference) {
  NumArray x(detections.size(), kBoxFeatureDim);
  for (std::size_t j = 0; j < detections.size(); ++j) write_features(x, j, detections[j], reference);
  Var hidden = relu(linear(tape, store, "enc.det.fc0", tape.constant(std::move(x))));
  return linear(tape, store, "enc.det.fc1", hidden);
}

}  // namespace ptp
