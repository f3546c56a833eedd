#include "ddfire/fire.hpp"

#include <algorithm>
#include <cmath>

#include "ddfire/cg.hpp"
#include "ddfire/errors.hpp"

namespace ddfire::fire {

double nu_floor(double signal_power) { return 1e-8 * signal_power; }

double clamp_sigma_y(double sigma_y, double signal_power) {
  require(sigma_y >= 0.0, "sigma_y must be nonnegative");
  return std::max(sigma_y, 1e-6 * std::sqrt(signal_power));
}

double estimate_nu(const Measurement& y, const LinearOperator& op, const Signal& x_bar,
                   double sigma_y, double floor) {
  require(op.frobenius_sq() > 0.0, "estimate_nu: operator has zero Frobenius norm");
  const double resid = (y - op.apply(x_bar)).squaredNorm();
  const double m = static_cast<double>(op.output_size());
  return std::max((resid - m * sigma_y * sigma_y) / op.frobenius_sq(), floor);
}

Signal mmse_update_svd(const Measurement& y, const LinearOperator& op, const Signal& x_bar,
                       double sigma_y, double nu) {
  require(nu > 0.0 && sigma_y > 0.0, "mmse_update_svd: nu and sigma_y must be positive");
  const auto& f = op.svd();
  const double w = sigma_y * sigma_y / nu;
  Vector coeff = w * (f.V.transpose() * x_bar);
  const Vector uty = f.U.transpose() * y;
  const Index k = std::min(op.output_size(), op.input_size());
  for (Index i = 0; i < k; ++i) coeff[i] += f.s[i] * uty[i];
  for (Index i = 0; i < coeff.size(); ++i) coeff[i] /= f.s[i] * f.s[i] + w;
  return f.V * coeff;
}

double speedup_sigma_hat_y2(double sigma_y2, double nu, double s_max, double cap) {
  const double scale = nu * s_max * s_max;
  if (scale <= 0.0) return sigma_y2;
  return scale * std::max(cap, sigma_y2 / scale);
}

CgUpdate mmse_update_cg(const Measurement& y, const LinearOperator& op, const Signal& x_bar,
                        double sigma_y, double nu, const CgSettings& cg) {
  require(nu > 0.0 && sigma_y > 0.0, "mmse_update_cg: nu and sigma_y must be positive");
  require(cg.tolerance > 0.0 && cg.max_iterations >= 1, "mmse_update_cg: invalid CG settings");
  double sigma_hat2 = sigma_y * sigma_y;
  if (cg.speedup) sigma_hat2 = speedup_sigma_hat_y2(sigma_hat2, nu, op.s_max(), cg.condition_cap);
  const double w = sigma_hat2 / nu;
  const Vector b = op.adjoint(y) + w * x_bar;
  auto normal = [&](const Vector& v) -> Vector { return op.normal(v) + w * v; };
  CgOutcome out = conjugate_gradient(normal, b, x_bar, cg.tolerance, cg.max_iterations);
  return {std::move(out.x), std::sqrt(sigma_hat2), out.iterations};
}

double mmse_error_variance(double s, double nu, double sigma_y, double sigma_hat_y) {
  const double sh2 = sigma_hat_y * sigma_hat_y;
  const double denom = s * s / sh2 + 1.0 / nu;
  return (s * s * sigma_y * sigma_y / (sh2 * sh2) + 1.0 / nu) / (denom * denom);
}

Vector renoise_spectrum(const Vector& s, double sigma2, double nu, double sigma_y,
                        double sigma_hat_y) {
  Vector lambda(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    double l = sigma2 - mmse_error_variance(s[i], nu, sigma_y, sigma_hat_y);
    if (l < -1e-12 * sigma2) {
      throw ContractViolation("colored noise: negative renoise variance " + std::to_string(l) +
                              " (sigma2 = " + std::to_string(sigma2) +
                              ", nu = " + std::to_string(nu) + ")");
    }
    lambda[i] = std::max(l, 0.0);
  }
  return lambda;
}

Signal colored_noise_svd(const LinearOperator& op, double sigma2, double nu, double sigma_y,
                         double sigma_hat_y, RandomStream& rng) {
  require(sigma2 >= nu * (1.0 - 1e-12), "colored_noise_svd: requires sigma2 >= nu");
  const auto& f = op.svd();
  const Vector lambda = renoise_spectrum(f.s, sigma2, nu, sigma_y, sigma_hat_y);
  const Vector eps = rng.normal(op.input_size());
  return f.V * (lambda.array().sqrt() * eps.array()).matrix();
}

double approx_xi(double s_max, double nu, double sigma_y, double sigma_hat_y) {
  if (s_max <= 0.0) return 0.0;
  return (nu - mmse_error_variance(s_max, nu, sigma_y, sigma_hat_y)) / (s_max * s_max);
}

Signal colored_noise_approx(const LinearOperator& op, double sigma2, double nu, double sigma_y,
                            double sigma_hat_y, RandomStream& rng) {
  require(sigma2 >= nu * (1.0 - 1e-12), "colored_noise_approx: requires sigma2 >= nu");
  require(sigma_hat_y >= sigma_y * (1.0 - 1e-12), "colored_noise_approx: requires sigma_hat_y >= sigma_y");
  const double xi = approx_xi(op.s_max(), nu, sigma_y, sigma_hat_y);
  require(xi >= -1e-12 * nu, "colored_noise_approx: negative xi");
  const Signal e1 = rng.normal(op.input_size());
  const Measurement e2 = rng.normal(op.output_size());
  return std::sqrt(std::max(sigma2 - nu, 0.0)) * e1 + std::sqrt(std::max(xi, 0.0)) * op.adjoint(e2);
}

LinearStage linear_stage(const Measurement& y, const LinearOperator& op, const Signal& x_bar,
                         double sigma_y, double sigma2, double rho, std::optional<double> nu_fixed,
                         const FireSettings& settings) {
  LinearStage st;
  st.resid_sq = (y - op.apply(x_bar)).squaredNorm();
  const double floor = nu_floor(settings.signal_power);
  if (nu_fixed) {
    st.nu = std::max(*nu_fixed, floor);
  } else {
    const double m = static_cast<double>(op.output_size());
    st.nu = std::max((st.resid_sq - m * sigma_y * sigma_y) / op.frobenius_sq(), floor);
  }

  st.used_svd = settings.solver == LinearSolver::kSvd ||
                (settings.solver == LinearSolver::kAuto && op.has_svd());
  if (st.used_svd) {
    st.x_hat = mmse_update_svd(y, op, x_bar, sigma_y, st.nu);
    st.sigma_hat_y = sigma_y;
  } else {
    CgUpdate cg = mmse_update_cg(y, op, x_bar, sigma_y, st.nu, settings.cg);
    st.x_hat = std::move(cg.x);
    st.sigma_hat_y = cg.sigma_hat_y;
    st.cg_iterations = cg.iterations;
  }
  st.sigma2_next = std::max(sigma2 / rho, st.nu);
  return st;
}

Signal colored_renoise(const LinearOperator& op, const LinearStage& stage, double sigma_y,
                       RandomStream& rng) {
  if (stage.used_svd)
    return colored_noise_svd(op, stage.sigma2_next, stage.nu, sigma_y, stage.sigma_hat_y, rng);
  return colored_noise_approx(op, stage.sigma2_next, stage.nu, sigma_y, stage.sigma_hat_y, rng);
}

void check_fire_arguments(const LinearOperator& op, const priors::Denoiser& denoiser,
                          const Signal& r_init, double sigma_init, int iterations, double rho) {
  require(iterations >= 1, "fire: N must be >= 1");
  require(rho > 1.0, "fire: rho must be > 1");
  require(sigma_init > 0.0, "fire: sigma_init must be positive");
  require(r_init.size() == op.input_size(), "fire: r_init length does not match the operator");
  require(denoiser.dimension() == op.input_size(), "fire: denoiser dimension does not match the operator");
}

FireResult fire_slm(const Measurement& y, const LinearOperator& op, double sigma_y,
                    const priors::Denoiser& denoiser, const Signal& r_init, double sigma_init,
                    int iterations, double rho, const FireSettings& settings, RandomStream& rng) {
  check_fire_arguments(op, denoiser, r_init, sigma_init, iterations, rho);
  require(y.size() == op.output_size(), "fire_slm: measurement length does not match the operator");
  const double sy = clamp_sigma_y(sigma_y, settings.signal_power);
  const double d = static_cast<double>(op.input_size());

  FireResult out;
  Signal r = r_init;
  double sigma2 = sigma_init * sigma_init;
  for (int n = 1; n <= iterations; ++n) {
    const double sigma = std::sqrt(sigma2);
    const Signal x_bar = denoiser.stochastic_denoise(r, sigma, rng, settings.stochastic_denoising);
    std::optional<double> nu_fixed;
    if (settings.nu_mode == NuMode::kTable) {
      nu_fixed = denoiser.output_variance(sigma) * (settings.stochastic_denoising ? 2.0 : 1.0);
    }
    LinearStage st = linear_stage(y, op, x_bar, sy, sigma2, rho, nu_fixed, settings);

    RunRow row;
    row.solver = settings.solver_name;
    row.step = settings.step;
    row.iter = n;
    row.sigma2 = sigma2;
    row.nu = st.nu;
    row.resid_sq = st.resid_sq;
    row.sigma_hat_y2 = st.sigma_hat_y * st.sigma_hat_y;
    if (!st.used_svd) row.cg_iters = st.cg_iterations;
    if (settings.truth) {
      row.true_nu = (x_bar - *settings.truth).squaredNorm() / d;
      row.true_sigma2 = (r - *settings.truth).squaredNorm() / d;
      row.mse = (st.x_hat - *settings.truth).squaredNorm() / d;
    }
    out.record.rows.push_back(row);
    if (settings.observer) settings.observer({settings.step, n, sigma2, st.nu, r, x_bar, st.x_hat});

    sigma2 = st.sigma2_next;
    if (n < iterations) {
      r = st.x_hat + colored_renoise(op, st, sy, rng);
    } else {
      out.x = std::move(st.x_hat);
    }
  }
  out.sigma2 = sigma2;
  return out;
}

}  // namespace ddfire::fire
