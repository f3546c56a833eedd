#pragma once

#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "ddfire/random.hpp"
#include "ddfire/types.hpp"

namespace ddfire::operators {

enum class OperatorKind {
  kDense,
  kMask,
  kCircularConvolution,
  kDecimatedConvolution,
  kOversampledFourier,
  kCodedDiffraction,
};

std::string_view to_string(OperatorKind kind);

/// A = U diag(s) V^T. U is m x m, V is d x d and s is padded with zeros to
/// length d so that s[i] pairs with column i of V.
struct SvdFactors {
  Matrix U;
  Vector s;
  Matrix V;
};

class OperatorImpl;

/// Measurement operator A : R^d -> R^m.
///
/// Immutable value type; copies share the underlying implementation and are
/// safe for concurrent read-only use. Complex-valued kinds (OSF, CDP) emit
/// interleaved (re, im) pairs and their adjoint returns the real part of the
/// conjugate transpose, so every kind is a real linear map.
class LinearOperator {
 public:
  LinearOperator() = default;

  OperatorKind kind() const;
  Index input_size() const;   // d
  Index output_size() const;  // m, counted in real scalars
  bool is_complex() const;
  /// Number of complex entries (m / 2) for complex kinds; m otherwise.
  Index channel_size() const;
  ImageShape image_shape() const;

  Measurement apply(const Signal& x) const;
  Signal adjoint(const Measurement& y) const;
  /// A^T A x
  Signal normal(const Signal& x) const;

  /// Largest singular value, closed form where the kind permits and power
  /// iteration otherwise (computed once at construction).
  double s_max() const { return s_max_; }
  /// ||A||_F^2, closed form or overridden by with_frobenius_sq.
  double frobenius_sq() const { return frob_sq_; }

  bool has_svd() const { return static_cast<bool>(svd_); }
  const SvdFactors& svd() const;

  /// Materialises A densely and attaches its full SVD. Intended for desk-scale
  /// operators (d up to a few thousand).
  LinearOperator with_svd() const;
  LinearOperator with_frobenius_sq(double frob_sq) const;

  Matrix to_dense() const;

  /// Mask rows of the identity, in the order given.
  const std::vector<Index>& mask_indices() const;
  /// Per-mask unit-modulus phases of a CDP operator.
  const std::vector<ComplexVector>& cdp_masks() const;

  static LinearOperator dense(Matrix A);
  static LinearOperator mask(Index d, std::vector<Index> keep);
  /// Keeps every pixel outside the box [row0, row0+h) x [col0, col0+w).
  static LinearOperator box_inpainting(ImageShape shape, Index row0, Index col0, Index h,
                                       Index w);
  /// Periodic convolution y[p] = sum_q h[q] x[p - q]; kernel tap (i, j) sits at
  /// offset (i - rows/2, j - cols/2).
  static LinearOperator circular_convolution(ImageShape shape, const Matrix& kernel);
  /// Circular convolution followed by keeping every `factor`-th pixel per axis.
  static LinearOperator decimated_convolution(ImageShape shape, const Matrix& kernel,
                                              Index factor);
  /// Zero-pad 2x per axis, then unitary 2-D FFT.
  static LinearOperator oversampled_fourier(ImageShape shape);
  /// Stack of L^{-1/2} F diag(c_l) with unit-modulus c_l.
  static LinearOperator coded_diffraction(ImageShape shape, std::vector<ComplexVector> masks);

 private:
  explicit LinearOperator(std::shared_ptr<const OperatorImpl> impl);

  std::shared_ptr<const OperatorImpl> impl_;
  std::shared_ptr<const SvdFactors> svd_;
  double s_max_ = 0.0;
  double frob_sq_ = 0.0;
};

Measurement apply(const LinearOperator& op, const Signal& x);
Signal adjoint(const LinearOperator& op, const Measurement& y);

/// Monte-Carlo estimate (1/L) sum_l ||A w_l||^2 with w_l ~ N(0, I).
double estimate_frobenius_sq(const LinearOperator& op, int probes, RandomStream& rng);

inline constexpr int kDefaultFrobeniusProbes = 25;

struct PowerIterationResult {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Power iteration on A^T A. On non-convergence returns the best estimate with
/// converged = false.
PowerIterationResult power_iteration_smax(const LinearOperator& op, int max_iterations = 500,
                                          double tol = 1e-10);

/// Oversampled Fourier operator (2x zero padding per axis, unitary FFT).
LinearOperator make_osf(ImageShape shape);
/// Coded diffraction operator with `masks` i.i.d. uniform-phase masks drawn from rng.
LinearOperator make_cdp(ImageShape shape, RandomStream& rng, int masks = 4);

/// Interleaved (re, im) <-> complex helpers.
ComplexVector to_complex(const Measurement& interleaved);
Measurement to_interleaved(const ComplexVector& z);

}  // namespace ddfire::operators
