#pragma once

#include "ddfire/channels.hpp"
#include "ddfire/fire.hpp"

namespace ddfire::glm {

struct Extrinsic {
  Measurement y_bar;
  double sigma_y_bar2 = 0.0;
  bool degenerate = false;  // nu_hat >= nu_bar was clamped
};

/// sigma_bar^2 = (1/nu_hat - 1/nu_bar)^-1, y_bar = sigma_bar^2 (z_hat/nu_hat - z_bar/nu_bar).
/// A non-informative step (nu_hat >= nu_bar) clamps nu_hat to (1 - 1e-6) nu_bar.
Extrinsic ep_extrinsic(const Measurement& z_hat, double nu_hat, const Measurement& z_bar,
                       double nu_bar);

/// FIRE for a generalized linear model: each iteration builds the EP
/// pseudo-measurement (y_bar, sigma_bar) from the channel and runs one SLM
/// iteration against it.
fire::FireResult fire_glm(const Measurement& y, const operators::LinearOperator& op,
                          const MeasurementChannel& channel, const priors::Denoiser& denoiser,
                          const Signal& r_init, double sigma_init, int iterations, double rho,
                          const fire::FireSettings& settings, RandomStream& rng);

/// y_j = sqrt(max{0, |z_j|^2 + w_j}), w_j ~ N(0, alpha^2 |z_j|^2). Complex z is
/// given interleaved when `complex_values` is set.
Measurement shot_noise_measure(const Measurement& z, double alpha_shot, bool complex_values,
                               RandomStream& rng);

/// Effective magnitude-domain noise level of shot noise: y ~ |z| + (alpha/2) w.
inline double shot_noise_sigma_y(double alpha_shot) { return 0.5 * alpha_shot; }

/// |z_j| per channel entry (complex entries interleaved when complex_values).
Measurement magnitudes(const Measurement& z, bool complex_values);

}  // namespace ddfire::glm
