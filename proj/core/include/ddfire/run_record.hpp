#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace ddfire {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// One solver iteration. Fields that do not apply stay NaN and are written
/// as empty CSV cells.
struct RunRow {
  std::string solver;
  int trial = 0;
  int step = 0;  // reverse-diffusion step k (0 for a bare FIRE call)
  int iter = 0;  // FIRE / inner iteration n, 1-based
  double sigma2 = kMissing;         // denoiser input variance at this iteration
  double nu = kMissing;             // estimated denoiser output variance
  double resid_sq = kMissing;       // ||y - A x_bar||^2 (or against y_bar for GLM)
  double sigma_hat_y2 = kMissing;   // noise variance used by the linear solve
  double cg_iters = kMissing;
  double nu_z_bar = kMissing;
  double nu_z_hat = kMissing;
  double sigma_y_bar2 = kMissing;
  double pseudo_resid_sq = kMissing;  // ||y_bar - A x0||^2 / m
  double true_nu = kMissing;          // ||x_bar - x0||^2 / d
  double true_sigma2 = kMissing;      // ||r - x0||^2 / d
  double mse = kMissing;              // ||x_hat - x0||^2 / d
  bool ep_degenerate = false;
};

struct RunRecord {
  std::vector<RunRow> rows;

  void append(const RunRecord& other);
  void set_trial(int trial);
  void write_csv(std::ostream& out, bool header = true) const;
};

std::string run_csv_header();

}  // namespace ddfire
