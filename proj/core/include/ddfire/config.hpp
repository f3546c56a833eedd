#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddfire/baselines.hpp"
#include "ddfire/channels.hpp"
#include "ddfire/fire.hpp"
#include "ddfire/priors.hpp"
#include "ddfire/types.hpp"

namespace ddfire::harness {

struct GeneratedMixture {
  int components = 4;
  Index block = 16;
  double mean_spread = 1.0;
  double mean_offset = 0.0;
  double variance = 0.05;
  std::uint64_t seed = 7;
};

struct PriorConfig {
  std::string kind = "isotropic-gaussian";
  std::vector<double> mean{0.0};  // one entry broadcasts
  double variance = 1.0;
  priors::GaussianMixture mixture;
  std::optional<GeneratedMixture> generated;
};

struct NuTableConfig {
  int points = priors::kDefaultNuGridPoints;
  int trials = priors::kDefaultNuTrials;
  /// Defaults to the square roots of the schedule end points.
  std::optional<double> sigma_min;
  std::optional<double> sigma_max;
  /// Use the closed form when the prior is an isotropic Gaussian.
  bool exact_if_available = true;
};

struct OperatorConfig {
  std::string kind = "dense";
  Index rows = 0;  // dense: measurement count
  std::vector<std::vector<double>> matrix;
  bool random = true;
  std::uint64_t seed = 1;
  std::vector<Index> keep;
  Index box_row0 = 0, box_col0 = 0, box_height = 0, box_width = 0;
  std::vector<std::vector<double>> kernel;
  std::string kernel_csv;
  Index factor = 2;
  int masks = 4;
  std::string masks_csv;
  bool svd = false;
  std::string frobenius = "exact";  // or "probe"
  int probes = operators::kDefaultFrobeniusProbes;
};

struct NoiseConfig {
  std::string kind = "gaussian";  // gaussian | shot | dequantization
  double sigma_y = 0.1;
  double alpha_shot = 0.0;
  std::optional<double> magnitude_sigma_y;  // defaults to alpha_shot / 2
  glm::MagnitudeMethod method = glm::MagnitudeMethod::kLaplace;
  std::vector<double> edges;
};

struct ScheduleConfig {
  double sigma_min2 = 1e-4;
  double sigma_max2 = 1e2;
  int steps = 10;
};

struct GuideConfig {
  double error_variance = 0.01;
  double factor = 50.0;
};

struct SolverConfig {
  std::string kind = "ddfire";  // ddfire | dds | diffpir | snore | fire-only
  ScheduleConfig schedule;
  int n_tot = 50;
  double delta = 0.4;
  double eta = 1.0;
  fire::FireSettings fire;
  int fire_iterations = 20;
  double fire_rho = 2.0;
  double fire_sigma_init = 10.0;
  baselines::DdsConfig dds;
  baselines::DiffPirConfig diffpir;
  baselines::SnoreConfig snore;
  std::optional<GuideConfig> guide;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int trials = 1;
  int workers = 1;
  std::string output_dir = "ddfire-out";
  ImageShape shape{1, 8};
  double peak = 1.0;
  PriorConfig prior;
  NuTableConfig nu_table;
  OperatorConfig op;
  NoiseConfig noise;
  SolverConfig solver;
  std::string source_json;  // echoed into the manifest
};

/// Throws ConfigError on malformed input. load_config resolves relative CSV
/// paths against the directory of the config file.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

/// Reads a numeric CSV (no header) into rows.
std::vector<std::vector<double>> read_csv_matrix(const std::string& path);

}  // namespace ddfire::harness
