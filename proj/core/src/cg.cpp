#include "ddfire/cg.hpp"

#include <cmath>
#include <string>

#include "ddfire/errors.hpp"

namespace ddfire {

CgOutcome conjugate_gradient(const std::function<Vector(const Vector&)>& apply,
                             const Vector& b, const Vector& x0, double tol,
                             int max_iterations) {
  require(max_iterations >= 1, "conjugate_gradient: max_iterations must be >= 1");
  require(b.size() == x0.size(), "conjugate_gradient: dimension mismatch");

  CgOutcome out;
  out.x = x0;
  const double b_norm = b.norm();
  if (b_norm == 0.0) {
    out.x.setZero();
    out.converged = true;
    return out;
  }

  Vector r = b - apply(out.x);
  Vector p = r;
  double rr = r.squaredNorm();
  double previous = std::sqrt(rr);
  int growth_streak = 0;
  out.relative_residual = previous / b_norm;
  if (tol > 0.0 && out.relative_residual <= tol) {
    out.converged = true;
    return out;
  }

  for (int it = 1; it <= max_iterations; ++it) {
    const Vector Ap = apply(p);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) {
      if (rr == 0.0) break;
      throw NumericalError("conjugate_gradient: operator is not positive definite (p'Ap = " +
                           std::to_string(pAp) + ")");
    }
    const double alpha = rr / pAp;
    out.x += alpha * p;
    r -= alpha * Ap;
    const double rr_new = r.squaredNorm();
    const double norm = std::sqrt(rr_new);
    out.iterations = it;
    out.relative_residual = norm / b_norm;

    growth_streak = norm > previous ? growth_streak + 1 : 0;
    if (growth_streak >= 10) {
      throw NumericalError("conjugate_gradient: residual grew for 10 consecutive iterations (rel " +
                           std::to_string(out.relative_residual) + " at iteration " +
                           std::to_string(it) + ")");
    }
    previous = norm;

    if (rr_new == 0.0 || (tol > 0.0 && out.relative_residual <= tol)) {
      out.converged = true;
      return out;
    }
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  out.converged = tol > 0.0 ? out.relative_residual <= tol : true;
  return out;
}

}  // namespace ddfire
