#pragma once

#include "ddfire/types.hpp"

namespace ddfire::metrics {

double mse(const Signal& x_hat, const Signal& x0);

/// 10 log10(peak^2 / mse); +infinity when the inputs are identical.
double psnr(const Signal& x_hat, const Signal& x0, double peak);

/// ||a - b|| / ||b||
double relative_l2(const Vector& a, const Vector& b);

/// Empirical covariance of the columns of `samples` (one sample per column).
Matrix empirical_covariance(const Matrix& samples);

/// Least-squares slope of ys against xs.
double fit_slope(const Vector& xs, const Vector& ys);

}  // namespace ddfire::metrics
