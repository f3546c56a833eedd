#include "ddfire/metrics.hpp"

#include <cmath>
#include <limits>

#include "ddfire/errors.hpp"

namespace ddfire::metrics {

double mse(const Signal& x_hat, const Signal& x0) {
  require(x_hat.size() == x0.size() && x0.size() > 0, "mse: length mismatch");
  return (x_hat - x0).squaredNorm() / static_cast<double>(x0.size());
}

double psnr(const Signal& x_hat, const Signal& x0, double peak) {
  require(peak > 0.0, "psnr: peak must be positive");
  const double e = mse(x_hat, x0);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / e);
}

double relative_l2(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "relative_l2: length mismatch");
  const double nb = b.norm();
  return nb == 0.0 ? (a - b).norm() : (a - b).norm() / nb;
}

Matrix empirical_covariance(const Matrix& samples) {
  require(samples.cols() >= 2, "empirical_covariance: need at least two samples");
  const Vector mean = samples.rowwise().mean();
  const Matrix centered = samples.colwise() - mean;
  return centered * centered.transpose() / static_cast<double>(samples.cols() - 1);
}

double fit_slope(const Vector& xs, const Vector& ys) {
  require(xs.size() == ys.size() && xs.size() >= 2, "fit_slope: need two or more points");
  const double mx = xs.mean(), my = ys.mean();
  const Vector dx = xs.array() - mx;
  return dx.dot(ys.array().matrix() - Vector::Constant(ys.size(), my)) / dx.squaredNorm();
}

}  // namespace ddfire::metrics
