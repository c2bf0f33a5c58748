#include "ptp/dsf.hpp"

#include "ptp/errors.hpp"
#include "ptp/layers.hpp"

namespace ptp {

void init_dsf_params(ParamStore& store, const DsfConfig& config, Rng& rng, std::size_t feature_dim) {
  add_linear(store, "dsf.fc0", feature_dim, config.hidden, rng);
  add_linear(store, "dsf.fc1", config.hidden, config.samples * config.latent_dim, rng);
}

Var dsf_forward(Tape& tape, const ParamStore& store, const DsfConfig& config, Var node_feature) {
  Var hidden = relu(linear(tape, store, "dsf.fc0", node_feature));
  Var codes = linear(tape, store, "dsf.fc1", hidden);
  return reshape(codes, node_feature.rows() * config.samples, config.latent_dim);
}

DppKernel dpp_kernel(Var trajectories, Var latents, double omega, double radius) {
  if (!(omega > 0.0) || !(radius > 0.0)) throw ContractError("dpp_kernel: omega and R must be positive");
  if (trajectories.rows() != latents.rows()) throw DimensionError("dpp_kernel: K mismatch");
  Var similarity = exp(scale(pairwise_sq_dist(trajectories), -omega));
  Var exponent = add_scalar(scale(squared_l2(latents), -1.0), radius * radius);
  Var quality = exp(clamp(exponent, 0.0, kQualityExponentCap));
  Var kernel = similarity * matmul(quality, transpose(quality));
  return {similarity, quality, kernel};
}

Var dpp_loss(Var kernel) {
  return add_scalar(spd_inverse_trace(kernel), -static_cast<double>(kernel.rows()));
}

Var sample_dsf(Tape& tape, const ParamStore& store, const DsfConfig& config, const CvaeConfig& cvae,
               const ForecastContext& ctx) {
  Var codes = dsf_forward(tape, store, config, ctx.node_feature);
  return decode(tape, store, cvae, codes, repeat_context(ctx, config.samples));
}

DsfLossTerms dsf_loss(Tape& tape, const ParamStore& store, const DsfConfig& config,
                      const CvaeConfig& cvae, const ForecastContext& ctx, const NumArray& gt_future) {
  const std::size_t m = ctx.agents();
  const std::size_t k = config.samples;
  if (k < 2) throw ContractError("dsf_loss: K must be >= 2");
  if (m == 0) throw ContractError("dsf_loss: no agents");
  if (gt_future.rows() != m || gt_future.cols() != 2 * cvae.horizon) {
    throw DimensionError("dsf_loss: ground truth must be M x 2T");
  }
  Var codes = dsf_forward(tape, store, config, ctx.node_feature);
  Var samples = decode(tape, store, cvae, codes, repeat_context(ctx, k));

  std::vector<Var> dpp_terms, recon_terms;
  for (std::size_t i = 0; i < m; ++i) {
    Var traj = slice_rows(samples, i * k, (i + 1) * k);
    Var lat = slice_rows(codes, i * k, (i + 1) * k);
    dpp_terms.push_back(dpp_loss(dpp_kernel(traj, lat, config.omega, config.quality_radius).kernel));
    NumArray gt_row(1, gt_future.cols());
    for (std::size_t c = 0; c < gt_future.cols(); ++c) gt_row(0, c) = gt_future(i, c);
    recon_terms.push_back(min_reduce(squared_l2(traj - tape.constant(std::move(gt_row)))));
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  Var dpp = scale(sum(concat_rows(dpp_terms)), inv_m);
  Var recon = scale(sum(concat_rows(recon_terms)), inv_m);
  return {dpp + recon, dpp, recon};
}

}  // namespace ptp
