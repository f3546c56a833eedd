#pragma once

#include "ddfire/operators.hpp"
#include "ddfire/types.hpp"

namespace ddfire::oracles {

struct GaussianPosterior {
  Signal mean;
  Matrix covariance;
  bool regularized = false;  // the normal equations were singular
};

/// Posterior of x0 ~ N(mean, cov) given y = A x0 + sigma_y w, via the normal
/// equations. An empty y (m = 0) returns the prior.
GaussianPosterior gaussian_posterior(const Signal& prior_mean, const Matrix& prior_cov,
                                     const Matrix& A, double sigma_y, const Measurement& y);

GaussianPosterior gaussian_posterior(const Signal& prior_mean, double prior_variance,
                                     const operators::LinearOperator& op, double sigma_y,
                                     const Measurement& y);

/// E{x0 | r, y} for r = x0 + sigma eps and an isotropic Gaussian prior.
GaussianPosterior gaussian_conditional(const Signal& prior_mean, double prior_variance,
                                       const operators::LinearOperator& op, double sigma_y,
                                       const Measurement& y, const Signal& r, double sigma);

}  // namespace ddfire::oracles
