#pragma once

#include <functional>
#include <optional>
#include <string>

#include "ddfire/operators.hpp"
#include "ddfire/priors.hpp"
#include "ddfire/random.hpp"
#include "ddfire/run_record.hpp"
#include "ddfire/types.hpp"

namespace ddfire::fire {

using operators::LinearOperator;

struct CgSettings {
  double tolerance = 1e-6;
  int max_iterations = 1000;
  /// Inflate sigma_y so that A^T A + (sigma_hat_y^2/nu) I has condition number
  /// at most 1 + 1/condition_cap.
  bool speedup = true;
  double condition_cap = 1e-4;
};

enum class LinearSolver { kAuto, kSvd, kCg };

/// kEstimate uses the residual-based estimate; kTable trusts the denoiser's
/// nu_hat(sigma) (useful when the denoiser error variance is known exactly).
enum class NuMode { kEstimate, kTable };

struct IterationProbe {
  int step;
  int iter;
  double sigma2;
  double nu;
  const Signal& r;
  const Signal& x_bar;
  const Signal& x_hat;
};

struct FireSettings {
  LinearSolver solver = LinearSolver::kAuto;
  CgSettings cg;
  bool stochastic_denoising = false;
  NuMode nu_mode = NuMode::kEstimate;
  /// Second moment of the signal; sets the nu floor and the sigma_y clamp.
  double signal_power = 1.0;
  /// Multiplier on nu_hat(sigma) when forming the GLM pseudo-prior.
  double glm_nu_factor = 2.0;
  /// Ground truth, only used to fill the true_* diagnostics.
  std::optional<Signal> truth;
  std::function<void(const IterationProbe&)> observer;
  std::string solver_name = "fire";
  int step = 0;
};

double nu_floor(double signal_power);
double clamp_sigma_y(double sigma_y, double signal_power);

/// max{(||y - A x_bar||^2 - m sigma_y^2) / ||A||_F^2, floor}
double estimate_nu(const Measurement& y, const LinearOperator& op, const Signal& x_bar,
                   double sigma_y, double floor);

/// argmin ||y - A x||^2 / sigma_y^2 + ||x - x_bar||^2 / nu through the SVD.
Signal mmse_update_svd(const Measurement& y, const LinearOperator& op, const Signal& x_bar,
                       double sigma_y, double nu);

/// sigma_hat_y^2 = nu s_max^2 max{cap, sigma_y^2 / (nu s_max^2)}
double speedup_sigma_hat_y2(double sigma_y2, double nu, double s_max, double cap);

struct CgUpdate {
  Signal x;
  double sigma_hat_y = 0.0;
  int iterations = 0;
};

/// Same objective solved by CG warm-started at x_bar, with sigma_y replaced by
/// sigma_hat_y when the speedup is enabled.
CgUpdate mmse_update_cg(const Measurement& y, const LinearOperator& op, const Signal& x_bar,
                        double sigma_y, double nu, const CgSettings& cg);

/// Error variance of the MMSE estimate along a singular direction with value s,
/// when the solve used sigma_hat_y but the data noise is sigma_y.
double mmse_error_variance(double s, double nu, double sigma_y, double sigma_hat_y);

/// lambda_i = sigma^2 - mmse_error_variance(s_i, ...), one per column of V.
Vector renoise_spectrum(const Vector& s, double sigma2, double nu, double sigma_y,
                        double sigma_hat_y);

/// c = V diag(lambda)^{1/2} eps.
Signal colored_noise_svd(const LinearOperator& op, double sigma2, double nu, double sigma_y,
                         double sigma_hat_y, RandomStream& rng);

/// xi = (nu - mmse_error_variance(s_max)) / s_max^2.
double approx_xi(double s_max, double nu, double sigma_y, double sigma_hat_y);

/// c = sqrt(sigma^2 - nu) eps1 + sqrt(xi) A^T eps2.
Signal colored_noise_approx(const LinearOperator& op, double sigma2, double nu, double sigma_y,
                            double sigma_hat_y, RandomStream& rng);

struct FireResult {
  Signal x;
  RunRecord record;
  double sigma2 = 0.0;  // variance reached after the last decrease
};

/// Result of the data-consistency half of one iteration, shared by SLM and GLM.
struct LinearStage {
  Signal x_hat;
  double nu = 0.0;
  double sigma2_next = 0.0;
  double sigma_hat_y = 0.0;
  int cg_iterations = 0;
  double resid_sq = 0.0;
  bool used_svd = false;
};

LinearStage linear_stage(const Measurement& y, const LinearOperator& op, const Signal& x_bar,
                         double sigma_y, double sigma2, double rho, std::optional<double> nu_fixed,
                         const FireSettings& settings);

Signal colored_renoise(const LinearOperator& op, const LinearStage& stage, double sigma_y,
                       RandomStream& rng);

void check_fire_arguments(const LinearOperator& op, const priors::Denoiser& denoiser,
                          const Signal& r_init, double sigma_init, int iterations, double rho);

/// N iterations of denoise, nu estimation, MMSE update, variance decrease and
/// colored renoising. The last iteration returns x_hat without renoising.
FireResult fire_slm(const Measurement& y, const LinearOperator& op, double sigma_y,
                    const priors::Denoiser& denoiser, const Signal& r_init, double sigma_init,
                    int iterations, double rho, const FireSettings& settings, RandomStream& rng);

}  // namespace ddfire::fire
