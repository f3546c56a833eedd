#pragma once

#include <complex>
#include <vector>

#include "ddfire/types.hpp"

namespace ddfire::glm {

enum class ChannelKind { kGaussian, kMagnitude, kDequantization };

enum class MagnitudeMethod {
  kQuadrature,
  /// Laplace approximation of the radial marginal, refined with 16
  /// Gauss-Hermite nodes on the Laplace Gaussian (the angle given the radius
  /// is von Mises and handled exactly). Falls back to quadrature when the
  /// radial mode has no negative curvature.
  kLaplace,
};

struct ScalarMoments {
  double mean = 0.0;
  double variance = 0.0;
};

struct ComplexMoments {
  std::complex<double> mean;
  double variance = 0.0;  // per real component
};

/// Moments of N(mu, s^2) truncated to [lo, hi); either end may be infinite.
ScalarMoments truncated_normal_moments(double mu, double s, double lo, double hi);

ScalarMoments gaussian_moments(double y, double z_bar, double nu_bar, double sigma_y2);

/// z ~ N(z_bar, nu_bar), y observes z + sigma_y w falling in [lo, hi).
ScalarMoments dequantization_moments(double lo, double hi, double z_bar, double nu_bar,
                                     double sigma_y2);

/// Real z ~ N(z_bar, nu_bar), y ~ N(|z|, sigma_y2).
ScalarMoments real_magnitude_moments(double y, double z_bar, double nu_bar, double sigma_y2);

/// Complex z with each real component ~ N(., nu_bar) around z_bar, y ~ N(|z|, sigma_y2).
ComplexMoments magnitude_moments(double y, std::complex<double> z_bar, double nu_bar,
                                 double sigma_y2, MagnitudeMethod method);
ComplexMoments magnitude_moments_quadrature(double y, std::complex<double> z_bar, double nu_bar,
                                            double sigma_y2);
/// Returns false when the Laplace approximation is not applicable.
bool magnitude_moments_laplace(double y, std::complex<double> z_bar, double nu_bar,
                               double sigma_y2, ComplexMoments& out);

/// Scalar likelihood p(y | z) applied entrywise to z = A x.
class MeasurementChannel {
 public:
  static MeasurementChannel gaussian(double sigma_y);
  static MeasurementChannel magnitude(double sigma_y,
                                      MagnitudeMethod method = MagnitudeMethod::kLaplace);
  /// Bins are (-inf, e0), [e0, e1), ..., [e_last, inf); y holds bin indices.
  static MeasurementChannel dequantization(std::vector<double> edges, double sigma_y);

  ChannelKind kind() const { return kind_; }
  double sigma_y() const { return sigma_y_; }
  MagnitudeMethod method() const { return method_; }
  const std::vector<double>& edges() const { return edges_; }

  /// Number of measurement entries the channel expects for an operator with
  /// m real outputs.
  Index measurement_size(Index m, bool complex_operator) const;

  struct Moments {
    Measurement z_hat;     // same real layout as z_bar
    double variance = 0.0; // average posterior variance per real scalar
  };

  /// Posterior moments of z = A x0 under the pseudo-prior N(z_bar, nu_bar I).
  Moments posterior(const Measurement& y, const Measurement& z_bar, double nu_bar,
                    bool complex_operator) const;

  /// Bin edges of a dequantization bin index.
  std::pair<double, double> bin(Index index) const;

 private:
  MeasurementChannel(ChannelKind kind, double sigma_y) : kind_(kind), sigma_y_(sigma_y) {}

  ChannelKind kind_;
  double sigma_y_;
  MagnitudeMethod method_ = MagnitudeMethod::kLaplace;
  std::vector<double> edges_;
};

}  // namespace ddfire::glm
