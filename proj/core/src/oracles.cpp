#include "ddfire/oracles.hpp"

#include <Eigen/Cholesky>

#include "ddfire/errors.hpp"

namespace ddfire::oracles {

namespace {

GaussianPosterior solve_information(const Matrix& precision, const Vector& information) {
  GaussianPosterior out;
  const Index d = precision.rows();
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) {
    out.regularized = true;
    const double eps = 1e-12 * std::max(precision.diagonal().cwiseAbs().maxCoeff(), 1.0);
    llt.compute(precision + eps * Matrix::Identity(d, d));
    if (llt.info() != Eigen::Success) throw NumericalError("gaussian posterior: singular system");
  }
  out.mean = llt.solve(information);
  out.covariance = llt.solve(Matrix::Identity(d, d));
  return out;
}

}  // namespace

GaussianPosterior gaussian_posterior(const Signal& prior_mean, const Matrix& prior_cov,
                                     const Matrix& A, double sigma_y, const Measurement& y) {
  const Index d = prior_mean.size();
  require(prior_cov.rows() == d && prior_cov.cols() == d, "gaussian_posterior: covariance shape");
  if (y.size() == 0) return {prior_mean, prior_cov, false};
  require(sigma_y > 0.0, "gaussian_posterior: sigma_y must be positive");
  require(A.rows() == y.size() && A.cols() == d, "gaussian_posterior: operator shape");
  const Matrix prior_prec = prior_cov.llt().solve(Matrix::Identity(d, d));
  const double w = 1.0 / (sigma_y * sigma_y);
  const Matrix precision = prior_prec + w * A.transpose() * A;
  const Vector information = prior_prec * prior_mean + w * A.transpose() * y;
  return solve_information(precision, information);
}

GaussianPosterior gaussian_posterior(const Signal& prior_mean, double prior_variance,
                                     const operators::LinearOperator& op, double sigma_y,
                                     const Measurement& y) {
  const Index d = prior_mean.size();
  const Matrix cov = prior_variance * Matrix::Identity(d, d);
  if (y.size() == 0) return {prior_mean, cov, false};
  return gaussian_posterior(prior_mean, cov, op.to_dense(), sigma_y, y);
}

GaussianPosterior gaussian_conditional(const Signal& prior_mean, double prior_variance,
                                       const operators::LinearOperator& op, double sigma_y,
                                       const Measurement& y, const Signal& r, double sigma) {
  require(prior_variance > 0.0 && sigma > 0.0 && sigma_y > 0.0,
          "gaussian_conditional: variances must be positive");
  const Index d = prior_mean.size();
  const Matrix A = op.to_dense();
  const double w = 1.0 / (sigma_y * sigma_y);
  const Matrix precision = (1.0 / prior_variance + 1.0 / (sigma * sigma)) * Matrix::Identity(d, d) +
                           w * A.transpose() * A;
  const Vector information =
      prior_mean / prior_variance + r / (sigma * sigma) + w * A.transpose() * y;
  return solve_information(precision, information);
}

}  // namespace ddfire::oracles
