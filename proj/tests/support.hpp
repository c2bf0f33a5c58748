#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "ptp/autodiff.hpp"
#include "ptp/params.hpp"

namespace ptp::testing {

using LossFn = std::function<Var(Tape&, const ParamStore&)>;

inline NumArray random_array(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  NumArray a(rows, cols);
  for (auto& v : a.data()) v = u(rng);
  return a;
}

inline double evaluate(const ParamStore& store, const LossFn& fn) {
  Tape tape;
  return fn(tape, store).value().item();
}

// Central differences on up to `per_tensor` entries of each trainable tensor.
// Returns the largest ||analytic - numeric|| / max(||analytic||, ||numeric||)
// over tensors; tensors whose both norms vanish count as exact.
inline double max_grad_rel_error(const ParamStore& store, const LossFn& fn, double h = 1e-5,
                                 std::size_t per_tensor = 0, std::uint64_t seed = 1,
                                 double floor = 1e-12) {
  GradientMap analytic;
  {
    Tape tape;
    analytic = tape.backward(fn(tape, store), store);
  }
  Rng rng(seed);
  ParamStore probe = store;
  double worst = 0.0;
  for (const auto& name : store.names()) {
    if (!store.trainable(name)) continue;
    const NumArray& value = store.value(name);
    std::vector<std::size_t> idx(value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (per_tensor && idx.size() > per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(per_tensor);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i : idx) {
      NumArray v = value;
      v[i] = value[i] + h;
      probe.set(name, v);
      const double up = evaluate(probe, fn);
      v[i] = value[i] - h;
      probe.set(name, v);
      const double down = evaluate(probe, fn);
      probe.set(name, value);
      const double num = (up - down) / (2.0 * h);
      const double an = analytic.at(name)[i];
      diff += (an - num) * (an - num);
      na += an * an;
      nn += num * num;
    }
    const double denom = std::sqrt(std::max(na, nn));
    if (denom < 1e-12 && floor <= 1e-12) continue;
    worst = std::max(worst, std::sqrt(diff) / std::max(denom, floor));
  }
  return worst;
}

}  // namespace ptp::testing
