#pragma once

#include <iosfwd>
#include <variant>
#include <vector>

#include "ddfire/random.hpp"
#include "ddfire/types.hpp"

namespace ddfire::priors {

struct IsotropicGaussian {
  Signal mean;
  double variance = 1.0;
};

/// Mixture of isotropic Gaussians applied independently to consecutive
/// blocks of length means[c].size() (e.g. 16-pixel patches).
struct GaussianMixture {
  std::vector<double> weights;
  std::vector<Signal> means;
  std::vector<double> variances;

  Index block_size() const { return means.empty() ? 0 : means.front().size(); }
};

using PriorSpec = std::variant<IsotropicGaussian, GaussianMixture>;

/// Throws ContractViolation if the spec is malformed or cannot cover R^d.
void validate(const PriorSpec& prior, Index d);

/// E{||x0||^2} / d
double second_moment(const PriorSpec& prior);

Signal sample(const PriorSpec& prior, Index d, RandomStream& rng);

/// Exact E{x0 | x0 + sigma * eps = r}.
Signal posterior_mean(const PriorSpec& prior, const Signal& r, double sigma);

/// sigma -> nu_hat(sigma) lookup, interpolated linearly in (log sigma, log nu).
class NuTable {
 public:
  NuTable() = default;
  NuTable(std::vector<double> sigma, std::vector<double> nu);

  double operator()(double sigma) const;
  const std::vector<double>& sigma() const { return sigma_; }
  const std::vector<double>& nu() const { return nu_; }
  bool empty() const { return sigma_.empty(); }

  void write_csv(std::ostream& out) const;

 private:
  std::vector<double> sigma_;
  std::vector<double> nu_;
};

inline constexpr int kDefaultNuGridPoints = 40;
inline constexpr int kDefaultNuTrials = 10000;

std::vector<double> log_spaced(double lo, double hi, int points);

/// Monte-Carlo average of ||posterior_mean(x0 + sigma eps, sigma) - x0||^2 / d.
/// The result is made nondecreasing and clipped to sigma^2.
NuTable build_nu_table(const PriorSpec& prior, Index d, const std::vector<double>& sigma_grid,
                       int trials, RandomStream& rng);

/// Closed-form table for the isotropic Gaussian prior: (1/nu_p + 1/sigma^2)^-1.
NuTable exact_nu_table(const IsotropicGaussian& prior, const std::vector<double>& sigma_grid);

/// Denoiser interface consumed by the solvers.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Index dimension() const = 0;
  /// Point estimate of x0 from r = x0 + sigma * eps. May consume draws.
  virtual Signal denoise(const Signal& r, double sigma, RandomStream& rng) const = 0;
  /// nu_hat(sigma): expected per-coordinate squared error of denoise.
  virtual double output_variance(double sigma) const = 0;

  /// denoise plus sqrt(nu_hat(sigma)) white noise when enabled.
  Signal stochastic_denoise(const Signal& r, double sigma, RandomStream& rng, bool enabled) const;
};

/// MMSE denoiser for an analytic prior plus its nu_hat lookup.
class DenoiserModel final : public Denoiser {
 public:
  DenoiserModel(PriorSpec prior, Index d, NuTable table);

  Index dimension() const override { return d_; }
  Signal denoise(const Signal& r, double sigma, RandomStream& rng) const override;
  double output_variance(double sigma) const override { return table_(sigma); }

  const PriorSpec& prior() const { return prior_; }
  const NuTable& nu_table() const { return table_; }

 private:
  PriorSpec prior_;
  Index d_;
  NuTable table_;
};

/// Idealised denoiser of the convergence analysis: returns x0 + sqrt(k sigma^2) e
/// with fresh white e, i.e. white Gaussian output error of known variance.
class IdealDenoiser final : public Denoiser {
 public:
  IdealDenoiser(Signal truth, double error_ratio);

  Index dimension() const override { return truth_.size(); }
  Signal denoise(const Signal& r, double sigma, RandomStream& rng) const override;
  double output_variance(double sigma) const override { return ratio_ * sigma * sigma; }

 private:
  Signal truth_;
  double ratio_;
};

}  // namespace ddfire::priors
