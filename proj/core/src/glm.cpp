#include "ddfire/glm.hpp"

#include <algorithm>
#include <cmath>

#include "ddfire/errors.hpp"

namespace ddfire::glm {

Extrinsic ep_extrinsic(const Measurement& z_hat, double nu_hat, const Measurement& z_bar,
                       double nu_bar) {
  require(nu_bar > 0.0 && nu_hat > 0.0, "ep_extrinsic: variances must be positive");
  require(z_hat.size() == z_bar.size(), "ep_extrinsic: length mismatch");
  Extrinsic out;
  if (nu_hat >= nu_bar * (1.0 - 1e-6)) {
    nu_hat = (1.0 - 1e-6) * nu_bar;
    out.degenerate = true;
  }
  out.sigma_y_bar2 = 1.0 / (1.0 / nu_hat - 1.0 / nu_bar);
  out.y_bar = out.sigma_y_bar2 * (z_hat / nu_hat - z_bar / nu_bar);
  return out;
}

fire::FireResult fire_glm(const Measurement& y, const operators::LinearOperator& op,
                          const MeasurementChannel& channel, const priors::Denoiser& denoiser,
                          const Signal& r_init, double sigma_init, int iterations, double rho,
                          const fire::FireSettings& settings, RandomStream& rng) {
  fire::check_fire_arguments(op, denoiser, r_init, sigma_init, iterations, rho);
  const bool cplx = op.is_complex();
  require(y.size() == channel.measurement_size(op.output_size(), cplx),
          "fire_glm: measurement length does not match the operator and channel");
  require(settings.glm_nu_factor > 0.0, "fire_glm: glm_nu_factor must be positive");
  const double d = static_cast<double>(op.input_size());
  const double m = static_cast<double>(op.output_size());
  const double floor = fire::nu_floor(settings.signal_power);

  fire::FireResult out;
  Signal r = r_init;
  double sigma2 = sigma_init * sigma_init;
  std::optional<Measurement> z_true;
  if (settings.truth) z_true = op.apply(*settings.truth);

  for (int n = 1; n <= iterations; ++n) {
    const double sigma = std::sqrt(sigma2);
    const Signal x_bar = denoiser.stochastic_denoise(r, sigma, rng, settings.stochastic_denoising);
    const double nu_prior =
        std::max(settings.glm_nu_factor * denoiser.output_variance(sigma), floor);

    const Measurement z_bar = op.apply(x_bar);
    const double nu_z_bar = nu_prior * op.frobenius_sq() / m;
    const auto moments = channel.posterior(y, z_bar, nu_z_bar, cplx);
    const Extrinsic ext = ep_extrinsic(moments.z_hat, moments.variance, z_bar, nu_z_bar);
    const double sigma_bar =
        fire::clamp_sigma_y(std::sqrt(ext.sigma_y_bar2), settings.signal_power);

    std::optional<double> nu_fixed;
    if (settings.nu_mode == fire::NuMode::kTable)
      nu_fixed = denoiser.output_variance(sigma) * (settings.stochastic_denoising ? 2.0 : 1.0);
    fire::LinearStage st =
        fire::linear_stage(ext.y_bar, op, x_bar, sigma_bar, sigma2, rho, nu_fixed, settings);

    RunRow row;
    row.solver = settings.solver_name;
    row.step = settings.step;
    row.iter = n;
    row.sigma2 = sigma2;
    row.nu = st.nu;
    row.resid_sq = st.resid_sq;
    row.sigma_hat_y2 = st.sigma_hat_y * st.sigma_hat_y;
    if (!st.used_svd) row.cg_iters = st.cg_iterations;
    row.nu_z_bar = nu_z_bar;
    row.nu_z_hat = moments.variance;
    row.sigma_y_bar2 = ext.sigma_y_bar2;
    row.ep_degenerate = ext.degenerate;
    if (settings.truth) {
      row.true_nu = (x_bar - *settings.truth).squaredNorm() / d;
      row.true_sigma2 = (r - *settings.truth).squaredNorm() / d;
      row.mse = (st.x_hat - *settings.truth).squaredNorm() / d;
      row.pseudo_resid_sq = (ext.y_bar - *z_true).squaredNorm() / m;
    }
    out.record.rows.push_back(row);
    if (settings.observer) settings.observer({settings.step, n, sigma2, st.nu, r, x_bar, st.x_hat});

    sigma2 = st.sigma2_next;
    if (n < iterations) {
      r = st.x_hat + fire::colored_renoise(op, st, sigma_bar, rng);
    } else {
      out.x = std::move(st.x_hat);
    }
  }
  out.sigma2 = sigma2;
  return out;
}

Measurement magnitudes(const Measurement& z, bool complex_values) {
  if (!complex_values) return z.cwiseAbs();
  Measurement out(z.size() / 2);
  for (Index j = 0; j < out.size(); ++j) out[j] = std::hypot(z[2 * j], z[2 * j + 1]);
  return out;
}

Measurement shot_noise_measure(const Measurement& z, double alpha_shot, bool complex_values,
                               RandomStream& rng) {
  require(alpha_shot >= 0.0, "shot_noise_measure: alpha_shot must be nonnegative");
  Measurement mag = magnitudes(z, complex_values);
  if (alpha_shot == 0.0) return mag;
  for (Index j = 0; j < mag.size(); ++j) {
    const double intensity = mag[j] * mag[j];
    const double w = alpha_shot * mag[j] * rng.normal();
    mag[j] = std::sqrt(std::max(0.0, intensity + w));
  }
  return mag;
}

}  // namespace ddfire::glm
