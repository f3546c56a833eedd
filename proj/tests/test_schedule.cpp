#include <gtest/gtest.h>

#include <cmath>

#include "ddfire/errors.hpp"
#include "ddfire/schedule.hpp"

using namespace ddfire;
using namespace ddfire::ddim;

TEST(Schedule, GeometricSigmas) {
  const auto s = geometric_sigmas(1e-4, 100.0, 3);
  ASSERT_EQ(s.steps(), 3);
  EXPECT_DOUBLE_EQ(s.at(1), 1e-4);
  EXPECT_NEAR(s.at(2), 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(s.at(3), 100.0);
  EXPECT_DOUBLE_EQ(s.at(0), 0.0);
  const auto t = geometric_sigmas(3e-3, 7e2, 12);
  for (int k = 2; k < 12; ++k) EXPECT_NEAR(t.at(k + 1) / t.at(k), t.at(2) / t.at(1), 1e-12);
  EXPECT_DOUBLE_EQ(t.at(12), 7e2);
}

TEST(Planner, TenStepsTwentyFiveEvaluations) {
  EXPECT_NEAR(k_min(25, 0.4), 16.0, 1e-12);
  const auto plan = plan_schedule(25, 0.4, geometric_sigmas(1e-4, 1e4, 10));
  EXPECT_EQ(plan.k_thresh, 4);
  EXPECT_LE(plan.total(), 25);
  for (int k = 1; k <= 10; ++k) {
    const int nk = plan.n_k[static_cast<size_t>(k - 1)];
    EXPECT_EQ(nk == 1, k <= 4) << k;
    const auto v = plan.iteration_variances(k);
    ASSERT_EQ(static_cast<int>(v.size()), nk);
    for (size_t n = 1; n < v.size(); ++n) EXPECT_NEAR(v[n] / v[n - 1], 1.0 / plan.rho, 1e-12);
    EXPECT_LE(v.back(), plan.sigma_thresh2 * (1 + 1e-9));
  }
  EXPECT_THROW(plan_schedule(25, 0.4, geometric_sigmas(1e-4, 1e4, 17)), ContractViolation);
}

TEST(Planner, FeasibleAcrossConfigurations) {
  for (int n_tot : {10, 25, 50, 100})
    for (double delta : {0.0, 0.2, 0.5, 0.9})
      for (int K : {1, 2, 5, 9}) {
        if (K > k_min(n_tot, delta)) continue;
        const auto plan = plan_schedule(n_tot, delta, geometric_sigmas(1e-3, 1e3, K));
        EXPECT_LE(plan.total(), n_tot);
        EXPECT_GE(plan.slack(), 0);
        for (int k = plan.k_thresh + 1; k <= K; ++k)
          EXPECT_LE(plan.iteration_variances(k).back(), plan.sigma_thresh2 * (1 + 1e-9));
      }
}

TEST(Planner, JsonFields) {
  const auto json = plan_schedule(25, 0.4, geometric_sigmas(1e-4, 1e4, 10)).to_json();
  for (const char* key : {"\"K\"", "\"delta\"", "\"N_tot\"", "\"rho\"", "\"k_thresh\"", "\"N_k\"", "\"sigma_k2\""})
    EXPECT_NE(json.find(key), std::string::npos) << key;
}

TEST(Ddim, CoefficientIdentity) {
  for (double eta : {0.0, 0.3, 1.0})
    for (auto [sk, sp] : {std::pair{2.0, 1.0}, std::pair{10.0, 0.1}, std::pair{1.0, 0.999}}) {
      const auto c = ddim_coefficients(sk, sp, eta);
      EXPECT_NEAR(c.h * c.h * sk * sk + c.varsigma * c.varsigma, sp * sp, 1e-12);
    }
  // eta = 1 reproduces the SMLD reverse noise level
  const auto c = ddim_coefficients(2.0, 1.5, 1.0);
  EXPECT_NEAR(c.varsigma * c.varsigma, 1.5 * 1.5 * (4.0 - 2.25) / 4.0, 1e-14);
}

TEST(Ddim, DegenerateSteps) {
  RandomStream rng(1);
  const Signal x{{1.0, -2.0}}, x_hat{{0.5, 0.5}};
  EXPECT_LT((ddim_step(x, x_hat, 1.3, 1.3, 0.0, rng) - x).norm(), 1e-15);
  EXPECT_EQ(ddim_step(x, x_hat, 1.3, 0.0, 1.0, rng), x_hat);
}

TEST(Ddim, MarginalPreservedWithCleanEstimate) {
  // x_hat = x0: Var{x_{k-1} - x0} = sigma_{k-1}^2 for any admissible eta
  const auto sched = geometric_sigmas(0.01, 50.0, 8);
  RandomStream rng(2);
  const int chains = 20000;
  for (double eta : {0.0, 0.5, 1.0}) {
    std::vector<double> var(9, 0.0);
    for (int c = 0; c < chains; ++c) {
      const Signal x0 = rng.normal(1);
      Signal x = x0 + std::sqrt(sched.at(8)) * rng.normal(1);
      for (int k = 8; k >= 2; --k) {
        x = ddim_step(x, x0, std::sqrt(sched.at(k)), std::sqrt(sched.at(k - 1)), eta, rng);
        var[static_cast<size_t>(k - 1)] += (x - x0).squaredNorm() / chains;
      }
    }
    for (int k = 1; k <= 7; ++k)
      EXPECT_NEAR(var[static_cast<size_t>(k)], sched.at(k), 0.04 * sched.at(k)) << eta << " " << k;
  }
}

TEST(Ddim, GaussianChainMatchesRecursion) {
  // x0 ~ N(0, nu_p) with the exact MMSE denoiser: x_{k-1} = a_k x_k + varsigma_k w, so
  // Var{x_{k-1}} = a_k^2 Var{x_k} + varsigma_k^2
  const double nu_p = 0.5, eta = 1.0;
  const auto sched = geometric_sigmas(0.01, 50.0, 8);
  RandomStream rng(3);
  const int chains = 20000;
  std::vector<double> var(9, 0.0), expect(9, 0.0);
  expect[8] = nu_p + sched.at(8);
  for (int k = 8; k >= 2; --k) {
    const double sk2 = sched.at(k), sp2 = sched.at(k - 1);
    const double vs2 = eta * eta * sp2 * (sk2 - sp2) / sk2;
    const double h = std::sqrt((sp2 - vs2) / sk2);
    const double a = h + (1.0 - h) * nu_p / (nu_p + sk2);
    expect[static_cast<size_t>(k - 1)] = a * a * expect[static_cast<size_t>(k)] + vs2;
  }
  for (int c = 0; c < chains; ++c) {
    Signal x = std::sqrt(expect[8]) * rng.normal(1);
    for (int k = 8; k >= 2; --k) {
      const double s2 = sched.at(k);
      const Signal x_hat = x * nu_p / (nu_p + s2);
      x = ddim_step(x, x_hat, std::sqrt(s2), std::sqrt(sched.at(k - 1)), eta, rng);
      var[static_cast<size_t>(k - 1)] += x.squaredNorm() / chains;
    }
  }
  for (int k = 1; k <= 7; ++k)
    EXPECT_NEAR(var[static_cast<size_t>(k)], expect[static_cast<size_t>(k)], 0.04 * expect[static_cast<size_t>(k)]) << k;
}

TEST(Ddim, GaussianMarginalOnFineSchedule) {
  // x0 ~ N(0, nu_p), exact denoiser, eta = 1: Var{x_k} = nu_p + sigma_k^2 up to a
  // discretization bias that vanishes as K grows (0.4% at K = 1000)
  const double nu_p = 0.5;
  const int K = 1000;
  const auto sched = geometric_sigmas(0.01, 50.0, K);
  RandomStream rng(4);
  // 1e4 chains give a 1.4% standard error on each variance, too close to the 3% band
  const int chains = 40000;
  std::vector<double> var(K + 1, 0.0);
  for (int c = 0; c < chains; ++c) {
    Signal x = std::sqrt(nu_p + sched.at(K)) * rng.normal(1);
    for (int k = K; k >= 2; --k) {
      const double s2 = sched.at(k);
      x = ddim_step(x, x * nu_p / (nu_p + s2), std::sqrt(s2), std::sqrt(sched.at(k - 1)), 1.0, rng);
      var[static_cast<size_t>(k - 1)] += x.squaredNorm() / chains;
    }
  }
  for (int k = 1; k < K; ++k)
    ASSERT_NEAR(var[static_cast<size_t>(k)], nu_p + sched.at(k), 0.03 * (nu_p + sched.at(k))) << k;
}

TEST(Ddim, VpVeConversion) {
  EXPECT_DOUBLE_EQ(vp_to_ve(0.5), 1.0);
  EXPECT_DOUBLE_EQ(vp_to_ve(1.0), 0.0);
  for (double a : {0.01, 0.3, 0.77, 0.999}) EXPECT_NEAR(ve_to_vp(vp_to_ve(a)), a, 1e-15);
}

TEST(Guidance, Limits) {
  const Signal x{{1.0, 2.0}}, g{{-1.0, 0.0}};
  const auto [r_far, nu_far] = guided_input(x, 0.5, g, 1e15);
  EXPECT_LT((r_far - x).norm(), 1e-12);
  EXPECT_NEAR(nu_far, 0.5, 1e-12);
  const auto [r_near, nu_near] = guided_input(x, 0.5, g, 1e-15);
  EXPECT_LT((r_near - g).norm(), 1e-12);
  EXPECT_LT(nu_near, 1e-14);
}

TEST(Ddfire, SingleStepIsOneFireCall) {
  const Index d = 4;
  const priors::IsotropicGaussian prior{Signal::Zero(d), 1.0};
  const priors::DenoiserModel den(prior, d, priors::exact_nu_table(prior, priors::log_spaced(1e-3, 1e2, 20)));
  Matrix A = Matrix::Identity(d, d);
  const Problem problem{Measurement::Ones(d), operators::LinearOperator::dense(A).with_svd(), 0.1,
                        std::nullopt};
  const auto plan = plan_schedule(3, 0.0, geometric_sigmas(1.0, 1.0, 1));
  ASSERT_EQ(plan.steps, 1);
  fire::FireSettings fs;
  RandomStream a(4), b(4);
  const auto s = ddfire_sample(problem, den, plan, 1.0, fs, a);
  const Signal xK = std::sqrt(plan.sigma_k2[0]) * b.normal(d);
  fs.step = 1;
  const auto f = run_fire(problem, den, xK, std::sqrt(plan.sigma_k2[0]), plan.n_k[0], plan.rho, fs, b);
  EXPECT_LT((s.x - f.x).norm(), 1e-14);
}
