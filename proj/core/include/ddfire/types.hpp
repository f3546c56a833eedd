#pragma once

#include <Eigen/Core>

namespace ddfire {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ComplexVector = Eigen::VectorXcd;

/// Pixel/coefficient-domain signal x in R^d.
using Signal = Eigen::VectorXd;

/// Measurement vector. Complex measurements are stored as interleaved
/// (re, im) pairs, so the length is always the count of real scalars.
using Measurement = Eigen::VectorXd;

struct ImageShape {
  Index rows = 1;
  Index cols = 1;

  Index size() const { return rows * cols; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

}  // namespace ddfire
