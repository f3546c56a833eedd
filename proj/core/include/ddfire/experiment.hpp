#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ddfire/config.hpp"
#include "ddfire/schedule.hpp"

namespace ddfire::harness {

/// Immutable objects shared by all trials of an experiment.
struct Setup {
  operators::LinearOperator op;
  priors::PriorSpec prior;
  std::shared_ptr<const priors::DenoiserModel> denoiser;
  ddim::NoiseSchedule schedule;
  std::optional<ddim::FirePlan> plan;
  std::optional<glm::MeasurementChannel> channel;
  double sigma_y = 0.0;
  double signal_power = 1.0;  // prior E{||x0||^2} / d
};

priors::PriorSpec build_prior(const PriorConfig& config, Index d);
operators::LinearOperator build_operator(const OperatorConfig& config, ImageShape shape,
                                         RandomStream& rng);
Setup build_setup(const ExperimentConfig& config);

/// Per-trial streams: keyed by (seed, trial, tag).
RandomStream trial_stream(std::uint64_t seed, int trial, std::string_view tag);

struct TrialOutcome {
  int trial = 0;
  RunRecord record;
  Signal x0;
  Signal x_hat;
  double mse = 0.0;
  double psnr = 0.0;
  double residual = 0.0;  // ||y - A x_hat|| (magnitude domain for shot noise)
  double seconds = 0.0;
  std::string error;  // empty on success
};

TrialOutcome run_trial(const ExperimentConfig& config, const Setup& setup, int trial);

struct ExperimentResult {
  std::vector<TrialOutcome> trials;
  RunRecord record;
  double seconds = 0.0;
  std::string manifest_json;
};

/// Runs every trial on `workers` threads; results are ordered by trial index
/// and independent of the worker count.
ExperimentResult run_experiment(const ExperimentConfig& config, const Setup& setup, int workers);

struct GridPoint {
  int steps = 0;
  double delta = 0.0;
  bool feasible = false;  // false when the (K, delta) plan does not fit N_tot
  double mean_mse = 0.0;
  double mean_psnr = 0.0;
  int failed_trials = 0;
};

/// MSE-based (K, delta) grid search for the ddfire solver at the configured
/// N_tot and schedule end points. Reuses the operator, prior and nu table of
/// `setup`.
std::vector<GridPoint> grid_search(const ExperimentConfig& config, const Setup& setup,
                                   const std::vector<int>& steps,
                                   const std::vector<double>& deltas, int workers);
void write_grid_csv(const std::vector<GridPoint>& grid, std::ostream& out);

/// Writes trace.csv, summary.json, the float32 reconstructions/ground truth
/// with JSON sidecars, and plan.json / nu_table.csv where applicable.
void write_artifacts(const ExperimentConfig& config, const Setup& setup,
                     const ExperimentResult& result, const std::string& directory);

/// Little-endian float32 blob plus a JSON sidecar giving its shape.
void write_f32_blob(const std::string& path, const std::vector<Signal>& signals, ImageShape shape);

}  // namespace ddfire::harness
