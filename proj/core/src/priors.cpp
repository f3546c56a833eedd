#include "ddfire/priors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "ddfire/errors.hpp"

namespace ddfire::priors {

namespace {

void validate_mixture(const GaussianMixture& gmm, Index d) {
  require(!gmm.weights.empty(), "gaussian-mixture: no components");
  require(gmm.weights.size() == gmm.means.size() && gmm.weights.size() == gmm.variances.size(),
          "gaussian-mixture: weights, means and variances differ in length");
  const Index b = gmm.block_size();
  require(b > 0, "gaussian-mixture: empty component mean");
  require(d % b == 0, "gaussian-mixture: block size " + std::to_string(b) +
                          " does not divide d = " + std::to_string(d));
  double total = 0.0;
  for (size_t c = 0; c < gmm.weights.size(); ++c) {
    require(gmm.weights[c] >= 0.0, "gaussian-mixture: negative weight");
    require(gmm.variances[c] > 0.0, "gaussian-mixture: variances must be positive");
    require(gmm.means[c].size() == b, "gaussian-mixture: component means differ in length");
    require(gmm.means[c].allFinite(), "gaussian-mixture: non-finite mean");
    total += gmm.weights[c];
  }
  require(std::abs(total - 1.0) <= 1e-12, "gaussian-mixture: weights must sum to 1");
}

Signal mixture_posterior_mean(const GaussianMixture& gmm, const Signal& r, double sigma) {
  const Index b = gmm.block_size();
  const size_t nc = gmm.weights.size();
  const double s2 = sigma * sigma;
  Signal out(r.size());
  std::vector<double> logw(nc);
  for (Index start = 0; start < r.size(); start += b) {
    const auto block = r.segment(start, b);
    double best = -INFINITY;
    for (size_t c = 0; c < nc; ++c) {
      const double v = gmm.variances[c] + s2;
      logw[c] = gmm.weights[c] > 0.0
                    ? std::log(gmm.weights[c]) - 0.5 * (block - gmm.means[c]).squaredNorm() / v -
                          0.5 * static_cast<double>(b) * std::log(v)
                    : -INFINITY;
      best = std::max(best, logw[c]);
    }
    double norm = 0.0;
    for (size_t c = 0; c < nc; ++c) norm += std::exp(logw[c] - best);
    auto dst = out.segment(start, b);
    dst.setZero();
    for (size_t c = 0; c < nc; ++c) {
      const double resp = std::exp(logw[c] - best) / norm;
      if (resp == 0.0) continue;
      const double shrink = gmm.variances[c] / (gmm.variances[c] + s2);
      dst += resp * (gmm.means[c] + shrink * (block - gmm.means[c]));
    }
  }
  return out;
}

}  // namespace

void validate(const PriorSpec& prior, Index d) {
  require(d > 0, "prior: dimension must be positive");
  if (const auto* iso = std::get_if<IsotropicGaussian>(&prior)) {
    require(iso->variance > 0.0, "isotropic-gaussian: variance must be positive");
    require(iso->mean.size() == d, "isotropic-gaussian: mean length " +
                                       std::to_string(iso->mean.size()) + " != d = " +
                                       std::to_string(d));
    require(iso->mean.allFinite(), "isotropic-gaussian: non-finite mean");
  } else {
    validate_mixture(std::get<GaussianMixture>(prior), d);
  }
}

double second_moment(const PriorSpec& prior) {
  if (const auto* iso = std::get_if<IsotropicGaussian>(&prior))
    return iso->mean.squaredNorm() / static_cast<double>(iso->mean.size()) + iso->variance;
  const auto& gmm = std::get<GaussianMixture>(prior);
  double acc = 0.0;
  for (size_t c = 0; c < gmm.weights.size(); ++c)
    acc += gmm.weights[c] *
           (gmm.means[c].squaredNorm() / static_cast<double>(gmm.block_size()) + gmm.variances[c]);
  return acc;
}

Signal sample(const PriorSpec& prior, Index d, RandomStream& rng) {
  if (const auto* iso = std::get_if<IsotropicGaussian>(&prior)) {
    return iso->mean + std::sqrt(iso->variance) * rng.normal(d);
  }
  const auto& gmm = std::get<GaussianMixture>(prior);
  const Index b = gmm.block_size();
  Signal x(d);
  for (Index start = 0; start < d; start += b) {
    double u = rng.uniform();
    size_t c = 0;
    while (c + 1 < gmm.weights.size() && u >= gmm.weights[c]) u -= gmm.weights[c++];
    x.segment(start, b) = gmm.means[c] + std::sqrt(gmm.variances[c]) * rng.normal(b);
  }
  return x;
}

Signal posterior_mean(const PriorSpec& prior, const Signal& r, double sigma) {
  require(sigma > 0.0, "denoise: sigma must be positive");
  if (const auto* iso = std::get_if<IsotropicGaussian>(&prior)) {
    require(r.size() == iso->mean.size(), "denoise: input length does not match prior");
    const double shrink = iso->variance / (iso->variance + sigma * sigma);
    return iso->mean + shrink * (r - iso->mean);
  }
  const auto& gmm = std::get<GaussianMixture>(prior);
  require(r.size() % gmm.block_size() == 0, "denoise: input length not a multiple of the block");
  return mixture_posterior_mean(gmm, r, sigma);
}

NuTable::NuTable(std::vector<double> sigma, std::vector<double> nu)
    : sigma_(std::move(sigma)), nu_(std::move(nu)) {
  require(!sigma_.empty() && sigma_.size() == nu_.size(), "NuTable: mismatched or empty grid");
  for (size_t i = 0; i < sigma_.size(); ++i) {
    require(sigma_[i] > 0.0 && nu_[i] > 0.0, "NuTable: entries must be positive");
    if (i > 0) require(sigma_[i] > sigma_[i - 1], "NuTable: sigma grid must be increasing");
  }
}

double NuTable::operator()(double sigma) const {
  require(!sigma_.empty(), "NuTable: lookup in an empty table");
  require(sigma > 0.0, "NuTable: sigma must be positive");
  double value;
  if (sigma_.size() == 1) {
    value = nu_[0] * (sigma / sigma_[0]) * (sigma / sigma_[0]);
  } else {
    auto it = std::upper_bound(sigma_.begin(), sigma_.end(), sigma);
    size_t hi = static_cast<size_t>(it - sigma_.begin());
    hi = std::clamp<size_t>(hi, 1, sigma_.size() - 1);
    const size_t lo = hi - 1;
    const double t = (std::log(sigma) - std::log(sigma_[lo])) /
                     (std::log(sigma_[hi]) - std::log(sigma_[lo]));
    value = std::exp(std::log(nu_[lo]) + t * (std::log(nu_[hi]) - std::log(nu_[lo])));
  }
  return std::min(value, sigma * sigma);
}

void NuTable::write_csv(std::ostream& out) const {
  out << "sigma,nu_hat\n";
  out.precision(17);
  for (size_t i = 0; i < sigma_.size(); ++i) out << sigma_[i] << ',' << nu_[i] << '\n';
}

std::vector<double> log_spaced(double lo, double hi, int points) {
  require(lo > 0.0 && hi > lo, "log_spaced: need 0 < lo < hi");
  require(points >= 2, "log_spaced: need at least two points");
  std::vector<double> out(static_cast<size_t>(points));
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < points; ++i) out[static_cast<size_t>(i)] = std::exp(a + (b - a) * i / (points - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

namespace {
void make_monotone(const std::vector<double>& sigma, std::vector<double>& nu) {
  for (size_t i = 0; i < nu.size(); ++i) {
    if (i > 0) nu[i] = std::max(nu[i], nu[i - 1]);
    nu[i] = std::min(nu[i], sigma[i] * sigma[i]);
  }
}
}  // namespace

NuTable build_nu_table(const PriorSpec& prior, Index d, const std::vector<double>& sigma_grid,
                       int trials, RandomStream& rng) {
  validate(prior, d);
  require(trials >= 1, "build_nu_table: trials must be >= 1");
  require(!sigma_grid.empty(), "build_nu_table: empty grid");
  std::vector<double> nu(sigma_grid.size());
  for (size_t g = 0; g < sigma_grid.size(); ++g) {
    const double sigma = sigma_grid[g];
    RandomStream stream = rng.derive(static_cast<std::uint64_t>(g));
    double acc = 0.0;
    for (int t = 0; t < trials; ++t) {
      const Signal x0 = sample(prior, d, stream);
      const Signal r = x0 + sigma * stream.normal(d);
      acc += (posterior_mean(prior, r, sigma) - x0).squaredNorm() / static_cast<double>(d);
    }
    nu[g] = std::max(acc / trials, 1e-300);
  }
  make_monotone(sigma_grid, nu);
  return NuTable(sigma_grid, std::move(nu));
}

NuTable exact_nu_table(const IsotropicGaussian& prior, const std::vector<double>& sigma_grid) {
  std::vector<double> nu;
  nu.reserve(sigma_grid.size());
  for (double s : sigma_grid) nu.push_back(1.0 / (1.0 / prior.variance + 1.0 / (s * s)));
  return NuTable(sigma_grid, std::move(nu));
}

Signal Denoiser::stochastic_denoise(const Signal& r, double sigma, RandomStream& rng,
                                    bool enabled) const {
  Signal out = denoise(r, sigma, rng);
  if (enabled) out += std::sqrt(output_variance(sigma)) * rng.normal(out.size());
  return out;
}

DenoiserModel::DenoiserModel(PriorSpec prior, Index d, NuTable table)
    : prior_(std::move(prior)), d_(d), table_(std::move(table)) {
  validate(prior_, d_);
  require(!table_.empty(), "DenoiserModel: empty nu table");
}

Signal DenoiserModel::denoise(const Signal& r, double sigma, RandomStream&) const {
  require(r.size() == d_, "denoise: input length does not match the model dimension");
  return posterior_mean(prior_, r, sigma);
}

IdealDenoiser::IdealDenoiser(Signal truth, double error_ratio)
    : truth_(std::move(truth)), ratio_(error_ratio) {
  require(error_ratio > 0.0 && error_ratio < 1.0, "IdealDenoiser: error ratio must be in (0, 1)");
}

Signal IdealDenoiser::denoise(const Signal& r, double sigma, RandomStream& rng) const {
  require(r.size() == truth_.size(), "denoise: input length does not match the truth");
  return truth_ + std::sqrt(ratio_) * sigma * rng.normal(truth_.size());
}

}  // namespace ddfire::priors
