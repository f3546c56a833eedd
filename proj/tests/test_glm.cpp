#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ddfire/errors.hpp"
#include "ddfire/glm.hpp"
#include "ddfire/metrics.hpp"

using namespace ddfire;
using namespace ddfire::glm;
using operators::LinearOperator;

TEST(Channels, GaussianConjugate) {
  const auto m = gaussian_moments(1.0, 3.0, 2.0, 0.5);
  EXPECT_NEAR(m.mean, (1.0 / 0.5 + 3.0 / 2.0) / (1 / 0.5 + 1 / 2.0), 1e-15);
  EXPECT_NEAR(m.variance, 1.0 / (1 / 0.5 + 1 / 2.0), 1e-15);
}

TEST(Channels, DequantizationHalfLine) {
  // standard normal prior, bin [0, inf), vanishing noise: half-normal mean
  const auto m = dequantization_moments(0.0, INFINITY, 0.0, 1.0, 1e-12);
  EXPECT_NEAR(m.mean, std::sqrt(2.0 / std::numbers::pi), 1e-6);
  EXPECT_NEAR(m.variance, 1.0 - 2.0 / std::numbers::pi, 1e-6);
}

TEST(Channels, TruncatedNormalFarTail) {
  const auto m = truncated_normal_moments(0.0, 1.0, 30.0, 31.0);
  EXPECT_TRUE(std::isfinite(m.mean));
  EXPECT_GT(m.mean, 30.0);
  EXPECT_LT(m.mean, 30.1);
}

TEST(Channels, MagnitudeSymmetry) {
  const auto m = magnitude_moments(2.0, {2.0, 0.0}, 0.1, 0.01, MagnitudeMethod::kQuadrature);
  EXPECT_GT(m.mean.real(), 0.0);
  EXPECT_NEAR(m.mean.imag(), 0.0, 1e-12);
}

TEST(Channels, MagnitudeAgainstGrid) {
  const double y = 1.2, nu = 0.4, s2 = 0.05;
  const std::complex<double> zb = std::polar(0.9, 0.4);
  const int n = 1200;
  const double R = 5.0, h = 2 * R / n;
  double m0 = 0, mu = 0, mv = 0, m2 = 0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const double u = -R + i * h, v = -R + j * h;
      const double p = std::exp(-0.5 * std::norm(std::complex<double>(u, v) - zb) / nu -
                                0.5 * std::pow(y - std::hypot(u, v), 2) / s2);
      m0 += p;
      mu += p * u;
      mv += p * v;
      m2 += p * (u * u + v * v);
    }
  mu /= m0;
  mv /= m0;
  const double var = 0.5 * (m2 / m0 - mu * mu - mv * mv);
  const auto q = magnitude_moments(y, zb, nu, s2, MagnitudeMethod::kQuadrature);
  EXPECT_NEAR(q.mean.real(), mu, 1e-3 * std::abs(q.mean));
  EXPECT_NEAR(q.mean.imag(), mv, 1e-3 * std::abs(q.mean));
  EXPECT_NEAR(q.variance, var, 1e-3 * var);
  const auto l = magnitude_moments(y, zb, nu, s2, MagnitudeMethod::kLaplace);
  EXPECT_NEAR(std::abs(l.mean - q.mean), 0.0, 0.05 * std::abs(q.mean));
}

TEST(Channels, DequantizationBins) {
  const auto ch = MeasurementChannel::dequantization({-1.0, 0.0, 1.0}, 0.1);
  EXPECT_EQ(ch.bin(0).first, -INFINITY);
  EXPECT_EQ(ch.bin(0).second, -1.0);
  EXPECT_EQ(ch.bin(3).first, 1.0);
  EXPECT_EQ(ch.bin(3).second, INFINITY);
  EXPECT_THROW(ch.bin(4), ContractViolation);
  EXPECT_THROW(MeasurementChannel::dequantization({1.0, 0.0}, 0.1), ContractViolation);
}

TEST(Extrinsic, GaussianChannelReturnsMeasurement) {
  const auto ch = MeasurementChannel::gaussian(0.3);
  const Measurement y{{1.0, -2.0, 0.5}};
  const Measurement z_bar{{0.2, 0.1, -4.0}};
  for (double nu_bar : {0.01, 1.0, 50.0}) {
    const auto mom = ch.posterior(y, z_bar, nu_bar, false);
    const auto ext = ep_extrinsic(mom.z_hat, mom.variance, z_bar, nu_bar);
    EXPECT_LT((ext.y_bar - y).norm(), 1e-12 * (1 + nu_bar));
    EXPECT_NEAR(ext.sigma_y_bar2, 0.09, 1e-12);
  }
}

TEST(Extrinsic, HalvedVariance) {
  const Measurement z_hat{{0.7, -1.1}};
  const auto ext = ep_extrinsic(z_hat, 0.5, Measurement::Zero(2), 1.0);
  EXPECT_NEAR(ext.sigma_y_bar2, 1.0, 1e-15);
  EXPECT_LT((ext.y_bar - 2.0 * z_hat).norm(), 1e-15);
  EXPECT_FALSE(ext.degenerate);
  EXPECT_TRUE(ep_extrinsic(z_hat, 1.0, Measurement::Zero(2), 1.0).degenerate);
  EXPECT_THROW(ep_extrinsic(z_hat, 0.0, Measurement::Zero(2), 1.0), ContractViolation);
}

TEST(ShotNoise, NoiselessAndMoments) {
  RandomStream rng(1);
  const Measurement z{{3.0, -4.0, 0.5}};
  EXPECT_EQ(shot_noise_measure(z, 0.0, false, rng), z.cwiseAbs());
  const Measurement zc{{3.0, 4.0}};
  EXPECT_NEAR(shot_noise_measure(zc, 0.0, true, rng)[0], 5.0, 1e-15);
  const Measurement one = Measurement::Constant(1, 10.0);
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) acc += std::pow(shot_noise_measure(one, 0.1, false, rng)[0], 2) / n;
  EXPECT_NEAR(acc, 100.0, 2.0);
}

TEST(FireGlm, GaussianChannelEqualsSlm) {
  const Index d = 6, m = 4;
  RandomStream rng(2);
  Matrix A(m, d);
  for (Index j = 0; j < d; ++j) A.col(j) = rng.normal(m);
  const auto op = LinearOperator::dense(A).with_svd();
  const priors::IsotropicGaussian prior{Signal::Zero(d), 1.0};
  const priors::DenoiserModel den(prior, d, priors::exact_nu_table(prior, priors::log_spaced(1e-3, 10.0, 20)));
  const Measurement y = rng.normal(m);
  const Signal r = rng.normal(d);
  fire::FireSettings fs;
  RandomStream a(7), b(7);
  const auto slm = fire::fire_slm(y, op, 0.2, den, r, 2.0, 8, 2.0, fs, a);
  const auto glm = fire_glm(y, op, MeasurementChannel::gaussian(0.2), den, r, 2.0, 8, 2.0, fs, b);
  EXPECT_LT(metrics::relative_l2(glm.x, slm.x), 1e-10);
}

TEST(FireGlm, MagnitudeResidualDecreases) {
  const Index d = 2;
  const auto op = LinearOperator::dense(Matrix::Identity(d, d));
  // nonzero prior mean resolves the sign ambiguity of |x|
  const priors::IsotropicGaussian prior{Signal{{1.0, -1.0}}, 1.0};
  const priors::DenoiserModel den(prior, d, priors::exact_nu_table(prior, priors::log_spaced(1e-3, 100.0, 30)));
  const Signal x0{{1.5, -2.0}};
  const Measurement y = x0.cwiseAbs();
  const Signal r_init{{-0.3, 0.2}};
  fire::FireSettings fs;
  fs.signal_power = 2.0;
  RandomStream rng(3);
  const auto out = fire_glm(y, op, MeasurementChannel::magnitude(0.05), den, r_init, 3.0, 20, 1.5, fs, rng);
  const double before = (y - r_init.cwiseAbs()).norm();
  const double after = (y - out.x.cwiseAbs()).norm();
  EXPECT_LT(after, before);
}

TEST(FireGlm, RejectsMismatchedMeasurements) {
  const auto op = LinearOperator::dense(Matrix::Identity(3, 3));
  const priors::IsotropicGaussian prior{Signal::Zero(3), 1.0};
  const priors::DenoiserModel den(prior, 3, priors::exact_nu_table(prior, {0.1, 1.0}));
  RandomStream rng(1);
  fire::FireSettings fs;
  EXPECT_THROW(fire_glm(Measurement::Zero(2), op, MeasurementChannel::gaussian(0.1), den,
                        Signal::Zero(3), 1.0, 2, 2.0, fs, rng),
               ContractViolation);
}
