#include <gtest/gtest.h>

#include <cmath>

#include "ddfire/errors.hpp"
#include "ddfire/priors.hpp"

using namespace ddfire;
using namespace ddfire::priors;

namespace {

GaussianMixture two_component() {
  GaussianMixture g;
  g.weights = {0.3, 0.7};
  g.means = {Signal::Constant(1, -1.0), Signal::Constant(1, 2.0)};
  g.variances = {0.5, 0.2};
  return g;
}

// p(x) N(r; x, s^2) on a fine grid.
std::pair<double, double> grid_posterior(const GaussianMixture& g, double r, double s, int n = 400000) {
  const double lo = r - 12.0 * s - 6.0, hi = r + 12.0 * s + 6.0, h = (hi - lo) / n;
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    double p = 0.0;
    for (size_t c = 0; c < g.weights.size(); ++c)
      p += g.weights[c] / std::sqrt(g.variances[c]) *
           std::exp(-0.5 * std::pow(x - g.means[c][0], 2) / g.variances[c]);
    p *= std::exp(-0.5 * (r - x) * (r - x) / (s * s));
    m0 += p;
    m1 += p * x;
    m2 += p * x * x;
  }
  return {m1 / m0, m2 / m0 - (m1 / m0) * (m1 / m0)};
}

}  // namespace

TEST(Priors, IsotropicShrinkage) {
  const PriorSpec p = IsotropicGaussian{Signal::Zero(1), 1.0};
  EXPECT_NEAR(posterior_mean(p, Signal::Constant(1, 2.0), 1.0)[0], 1.0, 1e-15);
  const Signal r{{0.3, -2.0, 5.0}};
  const PriorSpec p3 = IsotropicGaussian{Signal::Zero(3), 1.0};
  EXPECT_LT((posterior_mean(p3, r, 1e-7) - r).norm(), 1e-12);
}

TEST(Priors, MixturePosteriorMeanMatchesQuadrature) {
  const auto g = two_component();
  for (double r : {-3.0, 0.0, 0.7, 4.0})
    for (double s : {0.1, 1.0, 3.0}) {
      const auto [mean, var] = grid_posterior(g, r, s);
      EXPECT_NEAR(posterior_mean(g, Signal::Constant(1, r), s)[0], mean, 1e-8) << r << " " << s;
    }
}

TEST(Priors, MixtureAppliesPerBlock) {
  GaussianMixture g;
  g.weights = {0.5, 0.5};
  g.means = {Signal::Constant(2, -1.0), Signal::Constant(2, 1.0)};
  g.variances = {0.1, 0.1};
  const Signal r{{-1.0, -1.0, 1.0, 1.0}};
  const Signal x = posterior_mean(g, r, 0.3);
  EXPECT_NEAR(x[0], x[1], 1e-15);
  EXPECT_NEAR(x[0], -x[2], 1e-12);
  EXPECT_LT(x[0], -0.9);
  EXPECT_THROW(validate(g, 5), ContractViolation);
}

TEST(Priors, StochasticDenoising) {
  const IsotropicGaussian prior{Signal::Zero(4), 1.0};
  const DenoiserModel den(prior, 4, exact_nu_table(prior, log_spaced(0.01, 100.0, 30)));
  RandomStream rng(1);
  const Signal r = rng.normal(4);
  RandomStream a(5), b(5);
  EXPECT_EQ(den.stochastic_denoise(r, 0.8, a, false), den.denoise(r, 0.8, b));

  const double sigma = 0.8;
  const Signal base = den.denoise(r, sigma, rng);
  double acc = 0.0;
  const int n = 100000;
  for (int t = 0; t < n; ++t) acc += (den.stochastic_denoise(r, sigma, rng, true) - base).squaredNorm();
  EXPECT_NEAR(acc / (4.0 * n), den.output_variance(sigma), 0.03 * den.output_variance(sigma));
}

TEST(Priors, NuTableClosedForm) {
  const IsotropicGaussian prior{Signal::Zero(16), 1.0};
  RandomStream rng(2);
  const auto grid = log_spaced(0.05, 20.0, 12);
  const NuTable mc = build_nu_table(prior, 16, grid, 10000, rng);
  for (double s : grid) EXPECT_NEAR(mc(s), 1.0 / (1.0 + 1.0 / (s * s)), 0.02 * mc(s)) << s;
  const NuTable exact = exact_nu_table(prior, grid);
  for (double s : grid) EXPECT_NEAR(exact(s), s * s / (1.0 + s * s), 1e-12);
  // log-log interpolation between grid points
  EXPECT_NEAR(exact(1.0), 0.5, 0.05);
}

TEST(Priors, NuTableBoundedBySigmaSquared) {
  const auto g = two_component();
  RandomStream rng(3);
  const auto grid = log_spaced(0.01, 30.0, 20);
  const NuTable t = build_nu_table(g, 1, grid, 2000, rng);
  for (size_t i = 0; i < grid.size(); ++i) EXPECT_LE(t.nu()[i], grid[i] * grid[i] * (1 + 1e-12));
}

TEST(Priors, MixtureNuTableMatchesQuadratureMmse) {
  const auto g = two_component();
  const double s = 0.7;
  // MMSE = E_r Var{x | r}, r integrated against the prior predictive
  const int n = 2000;
  const double lo = -8.0, hi = 9.0, h = (hi - lo) / n;
  double mmse = 0.0, mass = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double r = lo + i * h;
    double pr = 0.0;
    for (size_t c = 0; c < 2; ++c) {
      const double v = g.variances[c] + s * s;
      pr += g.weights[c] * std::exp(-0.5 * std::pow(r - g.means[c][0], 2) / v) / std::sqrt(v);
    }
    mmse += pr * grid_posterior(g, r, s, 4000).second;
    mass += pr;
  }
  mmse /= mass;
  RandomStream rng(4);
  const NuTable t = build_nu_table(g, 1, {s}, 10000, rng);
  EXPECT_NEAR(t(s), mmse, 0.05 * mmse);
}

TEST(Priors, IdealDenoiserErrorVariance) {
  const Signal x0 = Signal::Zero(1000);
  const IdealDenoiser den(x0, 0.25);
  RandomStream rng(5);
  const Signal x = den.denoise(Signal::Ones(1000), 2.0, rng);
  EXPECT_NEAR(x.squaredNorm() / 1000.0, 1.0, 0.1);
  EXPECT_DOUBLE_EQ(den.output_variance(2.0), 1.0);
}

TEST(Priors, SampleMoments) {
  const auto g = two_component();
  RandomStream rng(6);
  double m = 0.0, m2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = sample(g, 1, rng)[0];
    m += x / n;
    m2 += x * x / n;
  }
  EXPECT_NEAR(m, 0.3 * -1.0 + 0.7 * 2.0, 0.02);
  EXPECT_NEAR(m2, second_moment(g), 0.03);
}
