#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddfire/run_record.hpp"
#include "ddfire/types.hpp"

namespace ddfire::verify {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Acceptance criteria 1-10. Each builds its own problem instances from `seed`
/// and compares against an independent oracle.
CheckResult criterion_1(std::uint64_t seed);   // ideal-denoiser decay
CheckResult criterion_2(std::uint64_t seed);   // Gaussian posterior exactness
CheckResult criterion_3(std::uint64_t seed);   // renoising whiteness
CheckResult criterion_4(std::uint64_t seed);   // nu / sigma_bar_y^2 tracking
CheckResult criterion_5(std::uint64_t seed);   // schedule planner
CheckResult criterion_6(std::uint64_t seed);   // GLM -> SLM reduction
CheckResult criterion_7(std::uint64_t seed);   // channel moments vs brute force
CheckResult criterion_8(std::uint64_t seed);   // CG path parity and speedup
CheckResult criterion_9(std::uint64_t seed);   // desk-scale phase retrieval
CheckResult criterion_10(std::uint64_t seed);  // baseline sanity

inline constexpr std::uint64_t kDefaultSeed = 20240917;

/// Runs the selected criteria (all when `which` is empty) in order, calling
/// `report` after each.
std::vector<CheckResult> run_acceptance(std::uint64_t seed, const std::vector<int>& which = {},
                                        const std::function<void(const CheckResult&)>& report = {});

/// Fast module invariants (adjointness, isometries, planner minimality,
/// determinism, ...). Ids start at 101.
std::vector<CheckResult> run_invariants(std::uint64_t seed,
                                        const std::function<void(const CheckResult&)>& report = {});

/// "[PASS] 3 renoising whiteness: ..." style line.
std::string format_result(const CheckResult& result);

/// Eigen-spectra of the renoised error for the d = 16 circular deblur problem.
struct SpectraResult {
  double sigma2 = 0.0;
  double nu = 0.0;
  double sigma_y2 = 0.0;
  int trials = 0;
  Vector s;              // singular values, paired with the columns of V
  Vector lambda_exact;   // sigma^2 - mmse_error_variance(s_i)
  Vector lambda_approx;  // sigma^2 - nu + xi s_i^2
  Vector eig_svd;        // eigenvalues of the empirical cov{r - x0}, colored SVD renoise
  Vector eig_white;      // same with white renoise of variance sigma^2 - nu
  double approx_var_null = 0.0;  // empirical variance of the SVD-free noise along v_null
  double approx_var_top = 0.0;   // ... and along v_top
  Index null_index = 0;
  Index top_index = 0;
};

SpectraResult spectra_experiment(std::uint64_t seed, int trials = 100000);
void write_spectra_csv(const SpectraResult& result, std::ostream& out);

/// Ground-truth-instrumented FIRE runs: SLM on a GMM prior with a dense
/// operator, and DDfire-GLM on CDP phase retrieval with shot noise.
struct TrackingResult {
  RunRecord slm;
  RunRecord glm;
};

TrackingResult tracking_experiment(std::uint64_t seed, int slm_trials = 20, int glm_trials = 5);

}  // namespace ddfire::verify
