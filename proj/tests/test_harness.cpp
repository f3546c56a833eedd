#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "ddfire/config.hpp"
#include "ddfire/errors.hpp"
#include "ddfire/experiment.hpp"
#include "ddfire/metrics.hpp"
#include "ddfire/oracles.hpp"
#include "ddfire/random.hpp"

using namespace ddfire;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"({
  "seed": 3, "trials": 3,
  "signal": {"rows": 4, "cols": 4},
  "prior": {"kind": "gaussian-mixture", "generate": {"components": 3, "block": 4}},
  "nu_table": {"points": 10, "trials": 100},
  "operator": {"kind": "dense", "rows": 8},
  "noise": {"kind": "gaussian", "sigma_y": 0.05},
  "solver": {"kind": "ddfire", "schedule": {"sigma_min2": 1e-3, "sigma_max2": 10, "K": 5},
             "n_tot": 12, "delta": 0.4}
})";

}  // namespace

TEST(Metrics, Definitions) {
  const Signal a = Signal::Constant(5, 0.5);
  EXPECT_EQ(metrics::mse(a, a), 0.0);
  EXPECT_EQ(metrics::psnr(a, a, 1.0), std::numeric_limits<double>::infinity());
  const Signal b = a.array() + 0.1;
  EXPECT_NEAR(metrics::mse(b, a), 0.01, 1e-15);
  EXPECT_NEAR(metrics::psnr(b, a, 1.0), 20.0, 1e-12);
  RandomStream rng(1);
  double prev_mse = 0.0, prev_psnr = INFINITY;
  for (double s : {0.01, 0.1, 0.5, 2.0}) {
    const Signal x = a + s * rng.normal(5);
    const double m = metrics::mse(x, a), p = metrics::psnr(x, a, 1.0);
    if (m > prev_mse) {
      EXPECT_LT(p, prev_psnr);
    }
    prev_mse = m;
    prev_psnr = p;
  }
}

TEST(Oracles, GaussianPosterior) {
  const Measurement y{{2.0, -4.0}};
  const auto p = oracles::gaussian_posterior(Signal::Zero(2), Matrix::Identity(2, 2) * 0.25,
                                             Matrix::Identity(2, 2), 0.5, y);
  EXPECT_LT((p.mean - y / 2).norm(), 1e-14);
  const auto none = oracles::gaussian_posterior(Signal::Ones(2), Matrix::Identity(2, 2) * 3.0,
                                                Matrix::Zero(0, 2), 0.5, Measurement(0));
  EXPECT_EQ(none.mean, Signal::Ones(2));
  EXPECT_LT((none.covariance - 3.0 * Matrix::Identity(2, 2)).norm(), 1e-15);
}

TEST(Random, StreamsAreKeyedNotSequenced) {
  const RandomStream root(42);
  RandomStream a = root.derive("trial").derive(3);
  RandomStream b = root.derive("trial").derive(3);
  EXPECT_EQ(a.normal(4), b.normal(4));
  RandomStream c = root.derive("trial").derive(4);
  EXPECT_NE(a.normal(4), c.normal(4));
}

TEST(Config, ParsesAndRejects) {
  const auto c = harness::parse_config(kSmallConfig);
  EXPECT_EQ(c.trials, 3);
  EXPECT_EQ(c.shape.size(), 16);
  EXPECT_EQ(c.solver.n_tot, 12);
  EXPECT_THROW(harness::parse_config("{\"trials\": -1}"), ConfigError);
  EXPECT_THROW(harness::parse_config("{\"bogus\": 1}"), ConfigError);
  EXPECT_THROW(harness::parse_config("not json"), ConfigError);
  EXPECT_THROW(harness::parse_config(R"({"solver": {"kind": "nope"}})"), ConfigError);
}

TEST(Experiment, DeterministicAcrossWorkers) {
  const auto config = harness::parse_config(kSmallConfig);
  const auto setup = harness::build_setup(config);
  const auto one = harness::run_experiment(config, setup, 1);
  const auto three = harness::run_experiment(config, setup, 3);
  std::ostringstream a, b;
  one.record.write_csv(a);
  three.record.write_csv(b);
  EXPECT_EQ(a.str(), b.str());
  // a trial's output does not depend on which other trials ran
  EXPECT_EQ(harness::run_trial(config, setup, 2).x_hat, one.trials[2].x_hat);
}

TEST(Experiment, ZeroTrials) {
  auto config = harness::parse_config(kSmallConfig);
  config.trials = 0;
  const auto setup = harness::build_setup(config);
  const auto res = harness::run_experiment(config, setup, 2);
  EXPECT_TRUE(res.record.rows.empty());
  EXPECT_NE(res.manifest_json.find("\"trials\""), std::string::npos);
}

TEST(Experiment, WritesArtifacts) {
  const auto config = harness::parse_config(kSmallConfig);
  const auto setup = harness::build_setup(config);
  const auto res = harness::run_experiment(config, setup, 1);
  const fs::path dir = fs::temp_directory_path() / "ddfire_harness_test";
  fs::remove_all(dir);
  harness::write_artifacts(config, setup, res, dir.string());
  for (const char* f : {"trace.csv", "summary.json", "plan.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  std::ifstream trace(dir / "trace.csv");
  std::string header;
  std::getline(trace, header);
  for (const char* col : {"iter", "sigma2", "nu", "resid_sq", "sigma_hat_y2"})
    EXPECT_NE(header.find(col), std::string::npos) << col;
  // float32 blob holds trials x d values
  bool found_blob = false;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".f32") {
      EXPECT_EQ(fs::file_size(e.path()), 3u * 16u * sizeof(float));
      found_blob = true;
    }
  EXPECT_TRUE(found_blob);
  fs::remove_all(dir);
}

TEST(Experiment, GridSearchMarksInfeasiblePlans) {
  const auto config = harness::parse_config(kSmallConfig);
  const auto setup = harness::build_setup(config);
  // N_tot = 12, delta = 0.4: K_min = 7.9, so K = 10 is infeasible
  const auto grid = harness::grid_search(config, setup, {3, 10}, {0.4}, 1);
  ASSERT_EQ(grid.size(), 2u);
  EXPECT_TRUE(grid[0].feasible);
  EXPECT_GT(grid[0].mean_mse, 0.0);
  EXPECT_FALSE(grid[1].feasible);
  std::ostringstream csv;
  harness::write_grid_csv(grid, csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "K,delta,feasible,mean_mse,mean_psnr,failed_trials");
  auto dds = config;
  dds.solver.kind = "dds";
  EXPECT_THROW(harness::grid_search(dds, setup, {3}, {0.4}, 1), ConfigError);
}
