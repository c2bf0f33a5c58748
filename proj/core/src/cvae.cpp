#include "ptp/cvae.hpp"

#include <cmath>

#include "ptp/errors.hpp"
#include "ptp/layers.hpp"

namespace ptp {

namespace {

constexpr double kLogSigmaBound = 8.0;

std::size_t context_dim(std::size_t feature_dim) { return 2 * feature_dim + 2; }

Var context_features(Tape& tape, const ForecastContext& ctx) {
  const Var parts[] = {ctx.node_feature, ctx.past_summary, tape.constant(ctx.last_displacement)};
  return concat_cols(parts);
}

}  // namespace

void init_cvae_params(ParamStore& store, const CvaeConfig& c, Rng& rng, std::size_t feature_dim) {
  const std::size_t ctx = context_dim(feature_dim);
  add_linear(store, "cvae.enc.init", ctx, c.hidden, rng);
  add_gru_cell(store, "cvae.enc.gru", 2, c.hidden, rng);
  add_linear(store, "cvae.enc.mu", c.hidden + ctx, c.latent_dim, rng);
  add_linear(store, "cvae.enc.logsigma", c.hidden + ctx, c.latent_dim, rng);
  add_linear(store, "cvae.dec.init", c.latent_dim + ctx, c.hidden, rng);
  add_gru_cell(store, "cvae.dec.gru", 2 + c.latent_dim, c.hidden, rng);
  add_linear(store, "cvae.dec.out", c.hidden, 2, rng);
}

ForecastContext make_context(Var node_feature, Var past_summary, std::span<const PastTrajectory> tracks) {
  ForecastContext ctx{node_feature, past_summary, NumArray(tracks.size(), 2), NumArray(tracks.size(), 2)};
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const auto& s = tracks[i].states;
    const Box& last = s.back();
    ctx.last_position(i, 0) = last.x;
    ctx.last_position(i, 1) = last.z;
    if (s.size() >= 2) {
      ctx.last_displacement(i, 0) = last.x - s[s.size() - 2].x;
      ctx.last_displacement(i, 1) = last.z - s[s.size() - 2].z;
    }
  }
  return ctx;
}

ForecastContext repeat_context(const ForecastContext& ctx, std::size_t times) {
  const std::size_t m = ctx.agents();
  std::vector<std::size_t> index;
  index.reserve(m * times);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t k = 0; k < times; ++k) index.push_back(a);
  auto repeat = [&](const NumArray& src) {
    NumArray out(index.size(), src.cols());
    for (std::size_t r = 0; r < index.size(); ++r)
      for (std::size_t c = 0; c < src.cols(); ++c) out(r, c) = src(index[r], c);
    return out;
  };
  return {gather_rows(ctx.node_feature, index), gather_rows(ctx.past_summary, index),
          repeat(ctx.last_position), repeat(ctx.last_displacement)};
}

GaussianVar encode_posterior(Tape& tape, const ParamStore& store, const CvaeConfig& config,
                             const NumArray& future, const ForecastContext& ctx) {
  const std::size_t m = ctx.agents();
  if (future.rows() != m || future.cols() != 2 * config.horizon) {
    throw DimensionError("encode_posterior: future must be M x 2T");
  }
  Var cond = context_features(tape, ctx);
  Var h = tanh(linear(tape, store, "cvae.enc.init", cond));
  for (std::size_t t = 0; t < config.horizon; ++t) {
    NumArray step(m, 2);
    for (std::size_t i = 0; i < m; ++i) {
      const double px = t == 0 ? ctx.last_position(i, 0) : future(i, 2 * (t - 1));
      const double pz = t == 0 ? ctx.last_position(i, 1) : future(i, 2 * (t - 1) + 1);
      step(i, 0) = future(i, 2 * t) - px;
      step(i, 1) = future(i, 2 * t + 1) - pz;
    }
    h = gru_step(tape, store, "cvae.enc.gru", tape.constant(std::move(step)), h);
  }
  const Var head_in[] = {h, cond};
  Var joined = concat_cols(head_in);
  return {linear(tape, store, "cvae.enc.mu", joined),
          clamp(linear(tape, store, "cvae.enc.logsigma", joined), -kLogSigmaBound, kLogSigmaBound)};
}

Var decode(Tape& tape, const ParamStore& store, const CvaeConfig& config, Var z,
           const ForecastContext& ctx) {
  const std::size_t m = ctx.agents();
  if (z.rows() != m || z.cols() != config.latent_dim) throw DimensionError("decode: z must be M x D_z");
  Var cond = context_features(tape, ctx);
  const Var init_in[] = {z, cond};
  Var h = tanh(linear(tape, store, "cvae.dec.init", concat_cols(init_in)));
  Var position = tape.constant(ctx.last_position);
  Var previous = tape.constant(ctx.last_displacement);
  std::vector<Var> steps;
  steps.reserve(config.horizon);
  for (std::size_t t = 0; t < config.horizon; ++t) {
    const Var in[] = {previous, z};
    h = gru_step(tape, store, "cvae.dec.gru", concat_cols(in), h);
    previous = linear(tape, store, "cvae.dec.out", h);
    position = position + previous;
    steps.push_back(position);
  }
  return concat_cols(steps);
}

Var kl_diag_gauss(Var mu, Var log_sigma) {
  Var variance = exp(scale(log_sigma, 2.0));
  Var terms = add_scalar(mu * mu + variance - scale(log_sigma, 2.0), -1.0);
  return scale(row_sum(terms), 0.5);
}

double kl_diag_gauss(std::span<const double> mu, std::span<const double> sigma) {
  if (mu.size() != sigma.size()) throw DimensionError("kl_diag_gauss: mu and sigma lengths differ");
  double kl = 0.0;
  for (std::size_t d = 0; d < mu.size(); ++d) {
    if (!(sigma[d] > 0.0)) throw ContractError("kl_diag_gauss: sigma must be positive");
    kl += 0.5 * (mu[d] * mu[d] + sigma[d] * sigma[d] - 1.0 - 2.0 * std::log(sigma[d]));
  }
  return kl;
}

NumArray standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  NumArray out(rows, cols);
  for (auto& v : out.data()) v = normal(rng);
  return out;
}

ElboTerms elbo_loss(Tape& tape, const ParamStore& store, const CvaeConfig& config,
                    const NumArray& future, const ForecastContext& ctx, const NumArray& eps) {
  if (!(config.alpha > 0.0)) throw ContractError("elbo_loss: alpha must be positive");
  const std::size_t m = ctx.agents();
  if (m == 0) {
    Var zero = tape.constant(NumArray::scalar(0.0));
    return {zero, zero, zero};
  }
  if (eps.rows() != m || eps.cols() != config.latent_dim) throw DimensionError("elbo_loss: eps must be M x D_z");
  GaussianVar q = encode_posterior(tape, store, config, future, ctx);
  Var z = q.mu + exp(q.log_sigma) * tape.constant(eps);
  Var predicted = decode(tape, store, config, z, ctx);
  Var recon = scale(mean(squared_l2(tape.constant(future) - predicted)), 1.0 / (2.0 * config.alpha));
  Var kl = mean(kl_diag_gauss(q.mu, q.log_sigma));
  return {recon + kl, recon, kl};
}

ElboTerms elbo_loss(Tape& tape, const ParamStore& store, const CvaeConfig& config,
                    const NumArray& future, const ForecastContext& ctx, Rng& rng) {
  return elbo_loss(tape, store, config, future, ctx, standard_normal(ctx.agents(), config.latent_dim, rng));
}

Var sample_random(Tape& tape, const ParamStore& store, const CvaeConfig& config,
                  const ForecastContext& ctx, std::size_t samples, Rng& rng) {
  if (samples == 0) throw ContractError("sample_random: K must be >= 1");
  ForecastContext repeated = repeat_context(ctx, samples);
  Var z = tape.constant(standard_normal(repeated.agents(), config.latent_dim, rng));
  return decode(tape, store, config, z, repeated);
}

}  // namespace ptp
