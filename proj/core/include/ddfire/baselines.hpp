#pragma once

#include <optional>

#include "ddfire/schedule.hpp"

namespace ddfire::baselines {

struct DdsConfig {
  double gamma = 1.0;
  int cg_iterations = 4;
  double eta = 0.85;
};

struct DiffPirConfig {
  double lambda = 1.0;
  double eta = 0.5;
};

/// Annealing levels sigma_i are geometric between sigma_max and sigma_min,
/// alpha_i = alpha_scale * sigma_i^2 and every level runs the same number of
/// inner iterations.
struct SnoreConfig {
  double delta = 0.5;
  int levels = 10;
  int iterations_per_level = 10;
  double sigma_max = 1.0;
  double sigma_min = 0.01;
  double alpha_scale = 1.0;
  /// Majorize-minimize rounds for the proximal step of a magnitude channel.
  int mm_rounds = 5;
  std::optional<Signal> init;  // defaults to A^T y
};

struct BaselineOutput {
  Signal x;
  RunRecord record;
};

/// argmin ||y - A x||^2 + weight ||x - x_bar||^2 (SVD when attached, CG otherwise).
Signal tikhonov_solve(const Measurement& y, const operators::LinearOperator& op,
                      const Signal& x_bar, double weight);

/// DDS data step: M_cg CG iterations on (A^T A + gamma I) x = A^T y + gamma x_bar
/// started at x_bar. `aty` is A^T y.
Signal dds_data_step(const Vector& aty, const operators::LinearOperator& op, const Signal& x_bar,
                     double gamma, int cg_iterations, int* iterations = nullptr);

BaselineOutput dds_sample(const ddim::Problem& problem, const priors::Denoiser& denoiser,
                          const DdsConfig& config, const ddim::NoiseSchedule& schedule,
                          RandomStream& rng, const std::optional<Signal>& truth = std::nullopt);

BaselineOutput diffpir_sample(const ddim::Problem& problem, const priors::Denoiser& denoiser,
                              const DiffPirConfig& config, const ddim::NoiseSchedule& schedule,
                              RandomStream& rng, const std::optional<Signal>& truth = std::nullopt);

BaselineOutput snore_sample(const ddim::Problem& problem, const priors::Denoiser& denoiser,
                            const SnoreConfig& config, RandomStream& rng,
                            const std::optional<Signal>& truth = std::nullopt);

/// Per-level sigma_i, highest first.
std::vector<double> snore_sigmas(const SnoreConfig& config);

}  // namespace ddfire::baselines
