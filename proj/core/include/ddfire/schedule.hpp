#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ddfire/fire.hpp"
#include "ddfire/glm.hpp"

namespace ddfire::ddim {

/// sigma_k^2 for k = 1..K, stored at index k-1.
struct NoiseSchedule {
  std::vector<double> sigma2;

  int steps() const { return static_cast<int>(sigma2.size()); }
  /// sigma_k^2 with sigma_0^2 = 0.
  double at(int k) const { return k == 0 ? 0.0 : sigma2.at(static_cast<size_t>(k - 1)); }
};

/// sigma_k^2 = sigma_min^2 (sigma_max^2 / sigma_min^2)^((k-1)/(K-1)); K = 1 gives {sigma_max^2}.
NoiseSchedule geometric_sigmas(double sigma_min2, double sigma_max2, int steps);

struct FirePlan {
  int n_tot = 0;
  int steps = 0;
  double delta = 0.0;
  int k_thresh = 1;
  double sigma_thresh2 = 0.0;
  double rho = 2.0;
  std::vector<int> n_k;           // index k-1
  std::vector<double> sigma_k2;   // DDIM variances, index k-1
  std::vector<double> planning_variance;  // sigma_k^2, or nu_k under guidance

  int total() const;
  int slack() const { return n_tot - total(); }
  /// Denoiser input variances sigma_k^2 / rho^(n-1), n = 1..N_k.
  std::vector<double> iteration_variances(int k) const;
  std::string to_json() const;
};

/// K_min = (N_tot + 1 - delta) / (2 - delta)
double k_min(int n_tot, double delta);

/// Smallest number of FIRE iterations bringing sigma2 down to sigma_thresh2 at rate rho.
int iterations_for(double sigma2, double sigma_thresh2, double rho);

/// Chooses k_thresh = 1 + floor((K-1) delta) and the smallest rho whose
/// iteration counts fit in n_tot. Throws ContractViolation when K > K_min or
/// the budget cannot be met.
FirePlan plan_schedule(int n_tot, double delta, const NoiseSchedule& schedule);

/// Same, planning against nu_k = (1/sigma_k^2 + 1/sigma_guide^2)^-1.
FirePlan plan_schedule_guided(int n_tot, double delta, const NoiseSchedule& schedule,
                              double sigma_guide2);

struct DdimCoefficients {
  double h = 0.0;
  double varsigma = 0.0;
};

/// varsigma = eta sqrt(s_{k-1}^2 (s_k^2 - s_{k-1}^2) / s_k^2), h = sqrt((s_{k-1}^2 - varsigma^2) / s_k^2).
DdimCoefficients ddim_coefficients(double sigma_k, double sigma_prev, double eta);

/// x_{k-1} = h x_k + (1 - h) x_hat + varsigma n
Signal ddim_step(const Signal& x_k, const Signal& x_hat, double sigma_k, double sigma_prev,
                 double eta, RandomStream& rng);

inline constexpr double kDefaultEtaLinear = 1.5;

/// sigma_t^2 = (1 - alpha_bar) / alpha_bar
double vp_to_ve(double alpha_bar);
double ve_to_vp(double sigma2);

/// Measurements, operator and likelihood. A channel turns the problem into a GLM.
struct Problem {
  Measurement y;
  operators::LinearOperator op;
  double sigma_y = 0.0;
  std::optional<glm::MeasurementChannel> channel;
};

fire::FireResult run_fire(const Problem& problem, const priors::Denoiser& denoiser,
                          const Signal& r, double sigma, int iterations, double rho,
                          const fire::FireSettings& settings, RandomStream& rng);

struct SampleResult {
  Signal x;
  RunRecord record;
};

/// Reverse DDIM chain from x_K ~ N(0, sigma_K^2 I) with FIRE as the
/// conditional denoiser; returns x_hat_{0|1}.
SampleResult ddfire_sample(const Problem& problem, const priors::Denoiser& denoiser,
                           const FirePlan& plan, double eta, const fire::FireSettings& settings,
                           RandomStream& rng);

struct GuidanceSpec {
  Signal x_guide;
  double sigma_guide2 = 1.0;
};

/// Guide statistics (r_k, nu_k) for the DDIM state x_k and a noisy guide.
std::pair<Signal, double> guided_input(const Signal& x_k, double sigma_k2,
                                       const Signal& noisy_guide, double sigma_guide2);

SampleResult ddfire_guided_sample(const Problem& problem, const priors::Denoiser& denoiser,
                                  const FirePlan& plan, double eta, const GuidanceSpec& guide,
                                  const fire::FireSettings& settings, RandomStream& rng);

}  // namespace ddfire::ddim
