#include "ptp/layers.hpp"

namespace ptp {

void add_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                Rng& rng) {
  store.add_uniform(prefix + ".weight", in, out, rng);
  store.add(prefix + ".bias", NumArray(1, out));
}

Var linear(Tape& tape, const ParamStore& store, const std::string& prefix, Var x) {
  return add(matmul(x, tape.parameter(store, prefix + ".weight")),
             tape.parameter(store, prefix + ".bias"));
}

void add_lstm_cell(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                   Rng& rng) {
  store.add_uniform(prefix + ".weight", in + hidden, 4 * hidden, rng);
  NumArray bias(1, 4 * hidden);
  for (std::size_t k = hidden; k < 2 * hidden; ++k) bias[k] = 1.0;
  store.add(prefix + ".bias", std::move(bias));
}

LstmState lstm_step(Tape& tape, const ParamStore& store, const std::string& prefix, Var x,
                    const LstmState& state) {
  const std::size_t hidden = state.h.cols();
  const Var xh[] = {x, state.h};
  Var gates = linear(tape, store, prefix, concat_cols(xh));
  Var i = sigmoid(slice_cols(gates, 0, hidden));
  Var f = sigmoid(slice_cols(gates, hidden, 2 * hidden));
  Var g = tanh(slice_cols(gates, 2 * hidden, 3 * hidden));
  Var o = sigmoid(slice_cols(gates, 3 * hidden, 4 * hidden));
  Var c = f * state.c + i * g;
  return {o * tanh(c), c};
}

void add_gru_cell(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                  Rng& rng) {
  add_linear(store, prefix + ".gates", in + hidden, 2 * hidden, rng);
  add_linear(store, prefix + ".input", in, hidden, rng);
  add_linear(store, prefix + ".recur", hidden, hidden, rng);
}

Var gru_step(Tape& tape, const ParamStore& store, const std::string& prefix, Var x, Var h) {
  const std::size_t hidden = h.cols();
  const Var xh[] = {x, h};
  Var gates = sigmoid(linear(tape, store, prefix + ".gates", concat_cols(xh)));
  Var r = slice_cols(gates, 0, hidden);
  Var z = slice_cols(gates, hidden, 2 * hidden);
  Var n = tanh(linear(tape, store, prefix + ".input", x) +
               r * linear(tape, store, prefix + ".recur", h));
  return n + z * (h - n);
}

Var masked_update(Tape& tape, Var fresh, Var old, const NumArray& mask) {
  NumArray inverse = mask;
  for (auto& v : inverse.data()) v = 1.0 - v;
  return fresh * tape.constant(mask) + old * tape.constant(std::move(inverse));
}

}  // namespace ptp
