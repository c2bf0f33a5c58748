#pragma once

#include "ptp/autodiff.hpp"
#include "ptp/cvae.hpp"

namespace ptp {

struct DsfConfig {
  std::size_t samples = 20;     // K
  std::size_t latent_dim = 16;  // D_z
  std::size_t hidden = 128;
  double omega = 1.0;           // similarity scale
  double quality_radius = 2.0;  // R
};

inline constexpr double kQualityExponentCap = 50.0;

// "dsf.fc0" (64 -> hidden) and "dsf.fc1" (hidden -> K*D_z).
void init_dsf_params(ParamStore& store, const DsfConfig& config, Rng& rng,
                     std::size_t feature_dim = kFeatureDim);

// K latent codes per agent: (M*K) x D_z, agent-major.
Var dsf_forward(Tape& tape, const ParamStore& store, const DsfConfig& config, Var node_feature);

struct DppKernel {
  Var similarity;  // K x K, exp(-omega ||f_a - f_b||^2)
  Var quality;     // K x 1, exp(min(max(R^2 - ||z_k||^2, 0), 50))
  Var kernel;      // Diag(r) S Diag(r)
};

// trajectories: K x 2T, latents: K x D_z.
DppKernel dpp_kernel(Var trajectories, Var latents, double omega, double radius);

// -tr(I - (L + I)^-1) = tr((L + I)^-1) - K, never positive for PSD L.
Var dpp_loss(Var kernel);

struct DsfLossTerms {
  Var total;           // (1/M) sum_i dpp_i + recon_i
  Var dpp;             // mean dpp term
  Var reconstruction;  // mean min_k ||f_ik - f^_i||^2
};

// Decodes the DSF codes through the CVAE decoder and scores them against
// ground-truth futures (M x 2T). Requires K >= 2 and M >= 1.
DsfLossTerms dsf_loss(Tape& tape, const ParamStore& store, const DsfConfig& config,
                      const CvaeConfig& cvae, const ForecastContext& ctx, const NumArray& gt_future);

// Decoded DSF samples, (M*K) x 2T, agent-major.
Var sample_dsf(Tape& tape, const ParamStore& store, const DsfConfig& config, const CvaeConfig& cvae,
               const ForecastContext& ctx);

}  // namespace ptp
