#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddfire/config.hpp"
#include "ddfire/errors.hpp"
#include "ddfire/experiment.hpp"
#include "ddfire/schedule.hpp"
#include "ddfire/verify.hpp"

namespace fs = std::filesystem;
using namespace ddfire;

namespace {

constexpr int kExitContract = 1;
constexpr int kExitConfig = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_config) {
  if (with_config) cmd->add_option("--config", o.config, "experiment config (JSON)");
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "output directory");
}

std::ofstream open_output(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  const fs::path path = fs::path(dir) / name;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

struct PlanOptions {
  int n_tot = 25;
  double delta = 0.4;
  int steps = 10;
  double sigma_min2 = 1e-4;
  double sigma_max2 = 1e4;
};

int plan_schedule_cmd(const CommonOptions& common, PlanOptions p, const CLI::App& cmd) {
  std::optional<double> guide2;
  if (!common.config.empty()) {
    const auto config = harness::load_config(common.config);
    const auto& s = config.solver;
    if (cmd.count("--n-tot") == 0) p.n_tot = s.n_tot;
    if (cmd.count("--delta") == 0) p.delta = s.delta;
    if (cmd.count("--steps") == 0) p.steps = s.schedule.steps;
    if (cmd.count("--sigma-min2") == 0) p.sigma_min2 = s.schedule.sigma_min2;
    if (cmd.count("--sigma-max2") == 0) p.sigma_max2 = s.schedule.sigma_max2;
    if (s.guide) guide2 = s.guide->factor * s.guide->error_variance;
  }
  const auto schedule = ddim::geometric_sigmas(p.sigma_min2, p.sigma_max2, p.steps);
  const auto plan = guide2 ? ddim::plan_schedule_guided(p.n_tot, p.delta, schedule, *guide2)
                           : ddim::plan_schedule(p.n_tot, p.delta, schedule);
  std::printf("K=%d delta=%g N_tot=%d rho=%.6g k_thresh=%d sigma_thresh^2=%.6g total=%d slack=%d\n",
              plan.steps, plan.delta, plan.n_tot, plan.rho, plan.k_thresh, plan.sigma_thresh2,
              plan.total(), plan.slack());
  std::printf("%4s %14s %4s  %s\n", "k", "sigma_k^2", "N_k", "FIRE input variances");
  for (int k = plan.steps; k >= 1; --k) {
    std::printf("%4d %14.6g %4d ", k, plan.sigma_k2[static_cast<size_t>(k - 1)],
                plan.n_k[static_cast<size_t>(k - 1)]);
    for (double v : plan.iteration_variances(k)) std::printf(" %.4g", v);
    std::printf("\n");
  }
  if (!common.out.empty()) open_output(common.out, "plan.json") << plan.to_json() << '\n';
  return EXIT_SUCCESS;
}

int run_cmd(const CommonOptions& common) {
  if (common.config.empty()) throw ConfigError("run: --config is required");
  auto config = harness::load_config(common.config);
  if (common.seed) config.seed = *common.seed;
  if (common.workers) config.workers = *common.workers;
  const std::string out = common.out.empty() ? config.output_dir : common.out;
  const auto setup = harness::build_setup(config);
  const auto result = harness::run_experiment(config, setup, config.workers);
  harness::write_artifacts(config, setup, result, out);
  int failed = 0;
  double mse = 0.0;
  for (const auto& t : result.trials) {
    if (!t.error.empty()) {
      ++failed;
      std::fprintf(stderr, "trial %d failed: %s\n", t.trial, t.error.c_str());
    } else {
      mse += t.mse;
    }
  }
  const int ok = static_cast<int>(result.trials.size()) - failed;
  std::printf("%s: %d/%zu trials ok, mean MSE %.6g, %.3f s, artifacts in %s\n",
              config.solver.kind.c_str(), ok, result.trials.size(), ok > 0 ? mse / ok : 0.0,
              result.seconds, out.c_str());
  return failed == 0 ? EXIT_SUCCESS : kExitContract;
}

int verify_cmd(const CommonOptions& common, bool invariants_only, const std::vector<int>& criteria) {
  const std::uint64_t seed = common.seed.value_or(verify::kDefaultSeed);
  int failed = 0;
  auto report = [&](const verify::CheckResult& r) {
    std::cout << verify::format_result(r) << std::endl;
    failed += r.passed ? 0 : 1;
  };
  verify::run_invariants(seed, report);
  if (!invariants_only) verify::run_acceptance(seed, criteria, report);
  std::cout << (failed == 0 ? "all checks passed" : std::to_string(failed) + " checks failed")
            << std::endl;
  return failed == 0 ? EXIT_SUCCESS : kExitContract;
}

int tracking_cmd(const CommonOptions& common, int slm_trials, int glm_trials) {
  const std::string out = common.out.empty() ? "ddfire-tracking" : common.out;
  const auto tr = verify::tracking_experiment(common.seed.value_or(verify::kDefaultSeed),
                                              slm_trials, glm_trials);
  auto slm = open_output(out, "tracking_slm.csv");
  tr.slm.write_csv(slm);
  auto glm = open_output(out, "tracking_glm.csv");
  tr.glm.write_csv(glm);
  std::printf("wrote %zu SLM and %zu GLM rows to %s\n", tr.slm.rows.size(), tr.glm.rows.size(),
              out.c_str());
  return EXIT_SUCCESS;
}

int spectra_cmd(const CommonOptions& common, int trials) {
  const std::string out = common.out.empty() ? "ddfire-spectra" : common.out;
  const auto s = verify::spectra_experiment(common.seed.value_or(verify::kDefaultSeed), trials);
  auto f = open_output(out, "spectra.csv");
  verify::write_spectra_csv(s, f);
  std::printf("sigma^2 = %g, nu = %g, sigma_y^2 = %g, %d trials; wrote %s\n", s.sigma2, s.nu,
              s.sigma_y2, s.trials, (fs::path(out) / "spectra.csv").c_str());
  return EXIT_SUCCESS;
}

int tune_cmd(const CommonOptions& common, const std::vector<int>& steps,
             const std::vector<double>& deltas) {
  if (common.config.empty()) throw ConfigError("tune: --config is required");
  auto config = harness::load_config(common.config);
  if (common.seed) config.seed = *common.seed;
  if (common.workers) config.workers = *common.workers;
  const auto setup = harness::build_setup(config);
  const auto grid = harness::grid_search(config, setup, steps, deltas, config.workers);
  std::printf("%5s %7s %14s %10s %7s\n", "K", "delta", "mean MSE", "PSNR", "failed");
  const harness::GridPoint* best = nullptr;
  for (const auto& g : grid) {
    if (!g.feasible) {
      std::printf("%5d %7.3g %14s\n", g.steps, g.delta, "infeasible");
      continue;
    }
    std::printf("%5d %7.3g %14.6g %10.4g %7d\n", g.steps, g.delta, g.mean_mse, g.mean_psnr,
                g.failed_trials);
    if (!std::isnan(g.mean_mse) && (!best || g.mean_mse < best->mean_mse)) best = &g;
  }
  if (best) std::printf("best: K=%d delta=%g (N_tot=%d)\n", best->steps, best->delta, config.solver.n_tot);
  if (!common.out.empty()) {
    auto f = open_output(common.out, "grid.csv");
    harness::write_grid_csv(grid, f);
  }
  return best ? EXIT_SUCCESS : kExitContract;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DDfire / FIRE inverse-problem solvers"};
  app.require_subcommand(1);

  CommonOptions common;
  PlanOptions plan;
  auto* plan_cmd = app.add_subcommand("plan-schedule", "print the FIRE iteration plan per DDIM step");
  add_common(plan_cmd, common, true);
  plan_cmd->add_option("--n-tot", plan.n_tot, "total denoiser evaluations");
  plan_cmd->add_option("--delta", plan.delta, "fraction of single-iteration steps");
  plan_cmd->add_option("--steps", plan.steps, "DDIM steps K");
  plan_cmd->add_option("--sigma-min2", plan.sigma_min2);
  plan_cmd->add_option("--sigma-max2", plan.sigma_max2);

  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  add_common(run, common, true);

  bool invariants_only = false;
  std::vector<int> criteria;
  auto* ver = app.add_subcommand("verify", "run the invariant suite and acceptance criteria");
  add_common(ver, common, false);
  ver->add_flag("--invariants-only", invariants_only, "skip the acceptance criteria");
  ver->add_option("--criteria", criteria, "acceptance criteria to run (default: all)");

  int slm_trials = 20, glm_trials = 5;
  auto* track = app.add_subcommand("tracking", "write ground-truth nu / sigma_bar_y^2 traces");
  add_common(track, common, false);
  track->add_option("--slm-trials", slm_trials)->check(CLI::PositiveNumber);
  track->add_option("--glm-trials", glm_trials)->check(CLI::PositiveNumber);

  int spectra_trials = 100000;
  auto* spec = app.add_subcommand("spectra", "write renoised-error eigenvalue spectra");
  add_common(spec, common, false);
  spec->add_option("--trials", spectra_trials)->check(CLI::Range(2, 100000000));

  std::vector<int> tune_steps{5, 10, 20};
  std::vector<double> tune_deltas{0.2, 0.4, 0.6};
  auto* tune = app.add_subcommand("tune", "MSE grid search over (K, delta) for a ddfire config");
  add_common(tune, common, true);
  tune->add_option("--steps", tune_steps, "DDIM step counts K")->delimiter(',');
  tune->add_option("--deltas", tune_deltas, "single-iteration fractions delta")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*plan_cmd) return plan_schedule_cmd(common, plan, *plan_cmd);
    if (*run) return run_cmd(common);
    if (*ver) return verify_cmd(common, invariants_only, criteria);
    if (*track) return tracking_cmd(common, slm_trials, glm_trials);
    if (*spec) return spectra_cmd(common, spectra_trials);
    if (*tune) return tune_cmd(common, tune_steps, tune_deltas);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ContractViolation& e) {
    std::fprintf(stderr, "contract violation: %s\n", e.what());
    return kExitContract;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitContract;
  }
  return EXIT_SUCCESS;
}
