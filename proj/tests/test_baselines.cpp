#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>

#include "ddfire/baselines.hpp"
#include "ddfire/fire.hpp"
#include "ddfire/metrics.hpp"

using namespace ddfire;
using namespace ddfire::baselines;
using operators::LinearOperator;

namespace {

struct Identity {
  Index d = 10;
  priors::IsotropicGaussian prior{Signal::Zero(10), 1.0};
  priors::DenoiserModel den{prior, 10, priors::exact_nu_table(prior, priors::log_spaced(1e-4, 1e3, 30))};
  Signal x0;
  ddim::Problem problem;
  Identity() {
    RandomStream rng(1);
    x0 = rng.normal(d);
    problem = {x0, LinearOperator::dense(Matrix::Identity(d, d)), 1e-6, std::nullopt};
  }
};

}  // namespace

TEST(Dds, DataStepLimits) {
  const auto op = LinearOperator::dense(Matrix::Identity(3, 3));
  const Measurement y{{1.0, 2.0, 3.0}};
  const Signal xb{{-1.0, 0.0, 5.0}};
  EXPECT_LT((dds_data_step(op.adjoint(y), op, xb, 1.0, 50) - (y + xb) / 2).norm(), 1e-12);
  EXPECT_LT((dds_data_step(op.adjoint(y), op, xb, 1e14, 50) - xb).norm(), 1e-10);
}

TEST(Dds, DataStepMatchesFireMmse) {
  RandomStream rng(2);
  Matrix A(6, 9);
  for (Index j = 0; j < 9; ++j) A.col(j) = rng.normal(6);
  const auto op = LinearOperator::dense(A);
  const Signal xb = rng.normal(9);
  const Measurement y = rng.normal(6);
  const double sy = 0.1, nu = 0.3;
  const Signal a = fire::mmse_update_svd(y, op.with_svd(), xb, sy, nu);
  const Signal b = dds_data_step(op.adjoint(y), op, xb, sy * sy / nu, 200);
  EXPECT_LT(metrics::relative_l2(b, a), 1e-8);
}

TEST(Baselines, TikhonovMatchesNormalEquations) {
  RandomStream rng(3);
  Matrix A(4, 5);
  for (Index j = 0; j < 5; ++j) A.col(j) = rng.normal(4);
  const Signal xb = rng.normal(5);
  const Measurement y = rng.normal(4);
  const Signal direct =
      (A.transpose() * A + 0.7 * Matrix::Identity(5, 5)).ldlt().solve(A.transpose() * y + 0.7 * xb);
  for (const auto& op : {LinearOperator::dense(A), LinearOperator::dense(A).with_svd()})
    EXPECT_LT(metrics::relative_l2(tikhonov_solve(y, op, xb, 0.7), direct), 1e-8);
}

TEST(Baselines, NoiselessIdentityConverges) {
  const Identity p;
  const auto sched = ddim::geometric_sigmas(1e-4, 1e2, 10);
  RandomStream a(4), b(5), c(6);
  DdsConfig dds;
  dds.gamma = 1e-12;
  EXPECT_LT(metrics::relative_l2(dds_sample(p.problem, p.den, dds, sched, a).x, p.x0), 1e-6);
  EXPECT_LT(metrics::relative_l2(diffpir_sample(p.problem, p.den, DiffPirConfig{}, sched, b).x, p.x0), 1e-6);
  EXPECT_LT(metrics::relative_l2(snore_sample(p.problem, p.den, SnoreConfig{}, c).x, p.x0), 1e-6);
}

TEST(Baselines, DiffPirFitsDataOnIdentity) {
  const Identity p;
  RandomStream rng(7);
  DiffPirConfig cfg;
  cfg.eta = 1.0;
  const auto out = diffpir_sample(p.problem, p.den, cfg, ddim::geometric_sigmas(1e-4, 1e2, 15), rng, p.x0);
  ASSERT_FALSE(out.record.rows.empty());
  for (const auto& row : out.record.rows) EXPECT_LT(row.resid_sq, 10 * p.problem.sigma_y * p.problem.sigma_y);
}

TEST(Snore, LevelsAreGeometric) {
  SnoreConfig cfg;
  cfg.levels = 5;
  cfg.sigma_max = 10.0;
  cfg.sigma_min = 0.1;
  const auto s = snore_sigmas(cfg);
  ASSERT_EQ(s.size(), 5u);
  EXPECT_DOUBLE_EQ(s.front(), 10.0);
  EXPECT_NEAR(s.back(), 0.1, 1e-14);
  for (size_t i = 1; i < s.size(); ++i) EXPECT_NEAR(s[i] / s[i - 1], s[1] / s[0], 1e-12);
}

TEST(Snore, WhiteVersusColoredInputError) {
  // box inpainting: SNORE's denoiser input error is anisotropic, DDfire's is white
  const ImageShape sh{4, 4};
  const Index d = sh.size();
  const priors::IsotropicGaussian prior{Signal::Zero(d), 1.0};
  const priors::DenoiserModel den(prior, d, priors::exact_nu_table(prior, priors::log_spaced(1e-3, 1e2, 30)));
  const auto op = LinearOperator::box_inpainting(sh, 1, 1, 2, 2).with_svd();
  RandomStream truth(8);
  const Signal x0 = priors::sample(prior, d, truth);
  const double sy = 0.01;
  const Measurement y = op.apply(x0) + sy * truth.normal(op.output_size());
  const int n = 4000;

  // DDfire-style FIRE iteration: r = x_hat + colored noise, error should be sigma^2 I
  const double sigma2 = 0.3, nu = 0.2;
  Matrix fire_err(d, n);
  RandomStream rng(9);
  for (int t = 0; t < n; ++t) {
    const Signal x_bar = x0 + std::sqrt(nu) * rng.normal(d);
    const Signal x_hat = fire::mmse_update_svd(y, op, x_bar, sy, nu);
    fire_err.col(t) = x_hat + fire::colored_noise_svd(op, sigma2, nu, sy, sy, rng) - x0;
  }
  // SNORE-style: data prox then white noise of the same level
  Matrix snore_err(d, n);
  for (int t = 0; t < n; ++t) {
    const Signal x_bar = x0 + std::sqrt(nu) * rng.normal(d);
    const Signal x_hat = tikhonov_solve(y, op, x_bar, sy * sy / nu);
    snore_err.col(t) = x_hat + std::sqrt(sigma2 - nu) * rng.normal(d) - x0;
  }
  auto spread = [](const Matrix& e) {
    const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(metrics::empirical_covariance(e)).eigenvalues();
    return ev.maxCoeff() / ev.minCoeff();
  };
  EXPECT_GT(spread(snore_err), 2.0);
  // sampling spread of a white 16-dim covariance from 4000 draws is about 1.3
  EXPECT_LT(spread(fire_err), 1.45);
}
