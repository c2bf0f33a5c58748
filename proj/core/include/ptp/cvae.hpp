#pragma once

#include <span>
#include <vector>

#include "ptp/autodiff.hpp"
#include "ptp/encoders.hpp"

namespace ptp {

struct CvaeConfig {
  std::size_t horizon = 30;     // T
  std::size_t latent_dim = 16;  // D_z
  std::size_t hidden = 64;
  double alpha = 1.0;
};

// "cvae.enc.*" (posterior GRU + mu/log-sigma heads), "cvae.dec.*" (GRU decoder).
void init_cvae_params(ParamStore& store, const CvaeConfig& config, Rng& rng,
                      std::size_t feature_dim = kFeatureDim);

// Everything the forecasting head conditions on, one row per agent.
// Futures are flattened as [x1, z1, x2, z2, ..., xT, zT] in meters.
struct ForecastContext {
  Var node_feature;            // u^L, M x 64
  Var past_summary;            // track-encoder output for the past trajectory, M x 64
  NumArray last_position;      // M x 2, last observed (x, z)
  NumArray last_displacement;  // M x 2, last observed per-frame (dx, dz)

  std::size_t agents() const { return last_position.rows(); }
};

ForecastContext make_context(Var node_feature, Var past_summary,
                             std::span<const PastTrajectory> tracks);
// Rows repeated `times` times each, agent-major (row a*times + k).
ForecastContext repeat_context(const ForecastContext& ctx, std::size_t times);

struct GaussianVar {
  Var mu;         // M x D_z
  Var log_sigma;  // M x D_z
};

GaussianVar encode_posterior(Tape& tape, const ParamStore& store, const CvaeConfig& config,
                             const NumArray& future, const ForecastContext& ctx);

// M x 2T positions, accumulated from the last observed (x, z) by per-step
// displacements emitted autoregressively.
Var decode(Tape& tape, const ParamStore& store, const CvaeConfig& config, Var z,
           const ForecastContext& ctx);

// Row-wise KL(N(mu, diag sigma^2) || N(0, I)), M x 1.
Var kl_diag_gauss(Var mu, Var log_sigma);
// Plain closed form; throws ContractError for non-positive sigma.
double kl_diag_gauss(std::span<const double> mu, std::span<const double> sigma);

struct ElboTerms {
  Var total;           // mean over agents of reconstruction + kl
  Var reconstruction;  // mean of ||f - f~||^2 / (2 alpha)
  Var kl;              // mean KL
};

// Reparameterized with the given standard-normal draws (M x D_z).
ElboTerms elbo_loss(Tape& tape, const ParamStore& store, const CvaeConfig& config,
                    const NumArray& future, const ForecastContext& ctx, const NumArray& eps);
ElboTerms elbo_loss(Tape& tape, const ParamStore& store, const CvaeConfig& config,
                    const NumArray& future, const ForecastContext& ctx, Rng& rng);

NumArray standard_normal(std::size_t rows, std::size_t cols, Rng& rng);

// K prior samples per agent, decoded independently: (M*K) x 2T, agent-major.
Var sample_random(Tape& tape, const ParamStore& store, const CvaeConfig& config,
                  const ForecastContext& ctx, std::size_t samples, Rng& rng);

}  // namespace ptp
