#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>

#include "ddfire/errors.hpp"
#include "ddfire/fire.hpp"
#include "ddfire/metrics.hpp"
#include "ddfire/oracles.hpp"

using namespace ddfire;
using namespace ddfire::fire;

namespace {

Matrix random_matrix(Index m, Index d, std::uint64_t seed) {
  RandomStream rng(seed);
  Matrix A(m, d);
  for (Index j = 0; j < d; ++j) A.col(j) = rng.normal(m) / std::sqrt(static_cast<double>(m));
  return A;
}

}  // namespace

TEST(Fire, EstimateNu) {
  const auto id = LinearOperator::dense(Matrix::Identity(4, 4));
  const Signal x_bar = Signal::Zero(4);
  EXPECT_DOUBLE_EQ(estimate_nu(Measurement::Zero(4), id, x_bar, 0.0, 1e-8), 1e-8);
  // ||y - x_bar||^2 = m (sigma_y^2 + 0.25)
  const double sy = 0.3;
  const Measurement y = Measurement::Constant(4, std::sqrt(sy * sy + 0.25));
  EXPECT_NEAR(estimate_nu(y, id, x_bar, sy, 1e-8), 0.25, 1e-12);
}

TEST(Fire, EstimateNuUnbiased) {
  const auto op = LinearOperator::dense(random_matrix(30, 20, 1));
  RandomStream rng(2);
  const double nu0 = 0.4, sy = 0.1;
  double acc = 0.0;
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    const Signal x_bar = rng.normal(20);
    const Signal x0 = x_bar + std::sqrt(nu0) * rng.normal(20);
    acc += estimate_nu(op.apply(x0) + sy * rng.normal(30), op, x_bar, sy, -1e300) / n;
  }
  EXPECT_NEAR(acc, nu0, 0.02 * nu0);
}

TEST(Fire, MmseUpdateSvd) {
  const auto id = LinearOperator::dense(Matrix::Identity(3, 3)).with_svd();
  const Signal x_bar{{1.0, 2.0, 3.0}};
  const Measurement y{{3.0, 0.0, -1.0}};
  EXPECT_LT((mmse_update_svd(y, id, x_bar, 0.5, 0.25) - (y + x_bar) / 2).norm(), 1e-14);
  EXPECT_LT((mmse_update_svd(y, id, x_bar, 0.5, 1e-14) - x_bar).norm(), 1e-10);

  const Matrix A = random_matrix(6, 4, 3);
  const auto op = LinearOperator::dense(A).with_svd();
  RandomStream rng(4);
  const Signal xb = rng.normal(4);
  const Measurement yy = rng.normal(6);
  const double sy = 0.2, nu = 0.7;
  const Matrix M = A.transpose() * A / (sy * sy) + Matrix::Identity(4, 4) / nu;
  const Signal direct = M.ldlt().solve(A.transpose() * yy / (sy * sy) + xb / nu);
  EXPECT_LT(metrics::relative_l2(mmse_update_svd(yy, op, xb, sy, nu), direct), 1e-10);
}

TEST(Fire, CgMatchesSvdWithoutSpeedup) {
  const Matrix A = random_matrix(12, 20, 5);
  const auto op = LinearOperator::dense(A);
  RandomStream rng(6);
  CgSettings cg;
  cg.speedup = false;
  cg.tolerance = 1e-10;
  cg.max_iterations = 5000;
  const Signal xb = rng.normal(20);
  const Measurement y = rng.normal(12);
  const auto res = mmse_update_cg(y, op, xb, 0.05, 0.3, cg);
  EXPECT_LT(metrics::relative_l2(res.x, mmse_update_svd(y, op.with_svd(), xb, 0.05, 0.3)), 1e-6);
  EXPECT_DOUBLE_EQ(res.sigma_hat_y, 0.05);
}

TEST(Fire, SpeedupSigmaHat) {
  EXPECT_NEAR(speedup_sigma_hat_y2(1e-6, 0.16, 1.0, 1e-4), 1.6e-5, 1e-20);
  // no inflation once sigma_y^2 / (nu s_max^2) >= cap
  EXPECT_DOUBLE_EQ(speedup_sigma_hat_y2(0.01, 0.5, 2.0, 1e-4), 0.01);
}

TEST(Fire, RenoiseSpectrumClosedForms) {
  const Vector s{{0.0, 1.0}};
  const Vector lambda = renoise_spectrum(s, 1.0, 0.5, std::sqrt(0.5), std::sqrt(0.5));
  EXPECT_NEAR(lambda[0], 1.0 - 0.5, 1e-15);
  EXPECT_NEAR(lambda[1], 1.0 - 1.0 / (2.0 + 2.0), 1e-15);
  EXPECT_NEAR(approx_xi(1.0, 0.5, std::sqrt(0.5), std::sqrt(0.5)), 0.25, 1e-15);
  EXPECT_THROW(renoise_spectrum(s, 0.1, 0.5, 0.1, 0.1), ContractViolation);
}

TEST(Fire, ColoredNoiseCovariance) {
  const auto op = LinearOperator::dense(random_matrix(3, 5, 7)).with_svd();
  const double sigma2 = 0.9, nu = 0.6, sy = 0.3;
  RandomStream rng(8);
  const int n = 100000;
  Matrix samples(5, n);
  for (int t = 0; t < n; ++t) samples.col(t) = colored_noise_svd(op, sigma2, nu, sy, sy, rng);
  const Matrix cov = metrics::empirical_covariance(samples);
  const auto& f = op.svd();
  const Matrix expect = f.V * renoise_spectrum(f.s, sigma2, nu, sy, sy).asDiagonal() * f.V.transpose();
  EXPECT_LT((cov - expect).cwiseAbs().maxCoeff(), 0.05 * expect.diagonal().maxCoeff());
}

TEST(Fire, ColoredNoiseApproxEndpoints) {
  // 2x4 operator with singular values {2, 1} and a 2-dimensional null space
  Matrix A = Matrix::Zero(2, 4);
  A(0, 0) = 2.0;
  A(1, 1) = 1.0;
  const auto op = LinearOperator::dense(A);
  const double sigma2 = 0.5, nu = 0.3, sy = 0.2;
  RandomStream rng(9);
  double top = 0.0, null = 0.0;
  const int n = 100000;
  for (int t = 0; t < n; ++t) {
    const Signal c = colored_noise_approx(op, sigma2, nu, sy, sy, rng);
    top += c[0] * c[0] / n;
    null += c[3] * c[3] / n;
  }
  const Vector exact = renoise_spectrum(Vector{{2.0, 0.0}}, sigma2, nu, sy, sy);
  EXPECT_NEAR(top, exact[0], 0.05 * exact[0]);
  EXPECT_NEAR(null, sigma2 - nu, 0.05 * (sigma2 - nu));
}

TEST(Fire, GaussianFixedPointIdentityOperator) {
  const Index d = 6;
  const priors::IsotropicGaussian prior{Signal::Constant(d, 0.3), 2.0};
  const priors::DenoiserModel den(prior, d, priors::exact_nu_table(prior, priors::log_spaced(1e-4, 1e3, 40)));
  const auto op = LinearOperator::dense(Matrix::Identity(d, d)).with_svd();
  RandomStream rng(10);
  const double sy = 0.5;
  const Measurement y = rng.normal(d);
  const Signal exact = (y / (sy * sy) + prior.mean / prior.variance) / (1 / (sy * sy) + 1 / prior.variance);
  FireSettings fs;
  fs.nu_mode = NuMode::kTable;
  // FIRE targets E{x0 | r, y}; a very weak r makes it the posterior given y alone
  Signal acc = Signal::Zero(d);
  const int runs = 2000;
  const Signal r = rng.normal(d) * 100.0;
  for (int t = 0; t < runs; ++t) {
    RandomStream s = rng.derive(static_cast<std::uint64_t>(t));
    acc += fire_slm(y, op, sy, den, r, 1e3, 20, 2.0, fs, s).x / runs;
  }
  EXPECT_LT(metrics::relative_l2(acc, exact), 0.01);
}

TEST(Fire, SingleIterationIsDenoiseThenMmse) {
  const Index d = 5;
  const priors::IsotropicGaussian prior{Signal::Zero(d), 1.0};
  const priors::DenoiserModel den(prior, d, priors::exact_nu_table(prior, priors::log_spaced(1e-3, 1e2, 20)));
  const auto op = LinearOperator::dense(random_matrix(4, d, 11)).with_svd();
  RandomStream rng(12);
  const Signal r = rng.normal(d);
  const Measurement y = rng.normal(4);
  FireSettings fs;
  RandomStream a(1), b(1);
  const auto out = fire_slm(y, op, 0.1, den, r, 1.5, 1, 2.0, fs, a);
  const Signal x_bar = den.denoise(r, 1.5, b);
  const double nu = estimate_nu(y, op, x_bar, 0.1, nu_floor(fs.signal_power));
  EXPECT_LT((out.x - mmse_update_svd(y, op, x_bar, 0.1, nu)).norm(), 1e-12);
  EXPECT_EQ(out.record.rows.size(), 1u);
}

TEST(Fire, GeometricDecayWithIdealDenoiser) {
  const Index d = 8, m = 16;
  const auto op = LinearOperator::dense(random_matrix(m, d, 13)).with_svd();
  RandomStream rng(14);
  const Signal x0 = rng.normal(d);
  const priors::IdealDenoiser den(x0, 0.2);
  const Measurement y = op.apply(x0) + 30.0 * rng.normal(m);
  FireSettings fs;
  fs.nu_mode = NuMode::kTable;
  fs.truth = x0;
  const Signal r = x0 + std::sqrt(1e3) * rng.normal(d);
  const auto out = fire_slm(y, op, 30.0, den, r, std::sqrt(1e3), 15, 2.0, fs, rng);
  for (const auto& row : out.record.rows) EXPECT_LE(row.mse, 1e3 / std::pow(2.0, row.iter - 1));
}

TEST(Fire, RejectsBadArguments) {
  const Index d = 3;
  const priors::IsotropicGaussian prior{Signal::Zero(d), 1.0};
  const priors::DenoiserModel den(prior, d, priors::exact_nu_table(prior, {0.1, 1.0}));
  const auto op = LinearOperator::dense(Matrix::Identity(d, d));
  RandomStream rng(1);
  FireSettings fs;
  EXPECT_THROW(fire_slm(Measurement::Zero(d), op, 0.1, den, Signal::Zero(d), 1.0, 3, 1.0, fs, rng),
               ContractViolation);
  EXPECT_THROW(fire_slm(Measurement::Zero(d), op, 0.1, den, Signal::Zero(d), 1.0, 0, 2.0, fs, rng),
               ContractViolation);
  EXPECT_THROW(colored_noise_svd(op.with_svd(), 0.1, 0.5, 0.1, 0.1, rng), ContractViolation);
}
