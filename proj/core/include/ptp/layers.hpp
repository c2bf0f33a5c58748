#pragma once

#include <string>
#include <utility>

#include "ptp/autodiff.hpp"
#include "ptp/params.hpp"

namespace ptp {

// y = x W + b with W stored as "<prefix>.weight" (in x out), b as "<prefix>.bias" (1 x out).
void add_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);
Var linear(Tape& tape, const ParamStore& store, const std::string& prefix, Var x);

// LSTM cell, gate order i, f, g, o; forget bias initialised to 1.
void add_lstm_cell(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                   Rng& rng);
struct LstmState {
  Var h;
  Var c;
};
LstmState lstm_step(Tape& tape, const ParamStore& store, const std::string& prefix, Var x,
                    const LstmState& state);

// GRU cell: r, z from [x, h]; n = tanh(x W_in + b_in + r * (h W_hn + b_hn)).
void add_gru_cell(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                  Rng& rng);
Var gru_step(Tape& tape, const ParamStore& store, const std::string& prefix, Var x, Var h);

// Keeps rows of `fresh` where mask is 1 and rows of `old` where it is 0.
Var masked_update(Tape& tape, Var fresh, Var old, const NumArray& mask);

}  // namespace ptp
