#pragma once

#include <functional>

#include "ddfire/types.hpp"

namespace ddfire {

struct CgOutcome {
  Vector x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Conjugate gradients for a symmetric positive-definite system given as a
/// matrix-free product. Stops at ||r|| <= tol * ||b|| or after max_iterations
/// (tol = 0 runs exactly max_iterations unless the residual vanishes).
/// Throws NumericalError if the residual grows for 10 consecutive iterations.
CgOutcome conjugate_gradient(const std::function<Vector(const Vector&)>& apply,
                             const Vector& b, const Vector& x0, double tol,
                             int max_iterations);

}  // namespace ddfire
