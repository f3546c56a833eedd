#include "ddfire/channels.hpp"

#include <gsl/gsl_integration.h>
#include <gsl/gsl_sf_bessel.h>
#include <gsl/gsl_sf_erf.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ddfire/errors.hpp"

namespace ddfire::glm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double log_phi(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

// log Q(x) = log P(N(0,1) > x)
double log_q(double x) {
  if (x == kInf) return -kInf;
  if (x == -kInf) return 0.0;
  return gsl_sf_log_erfc(x / std::numbers::sqrt2) - std::numbers::ln2;
}

double q(double x) { return std::exp(log_q(x)); }

// Standardised truncation to [a, b) with a >= 0.
ScalarMoments right_tail_moments(double a, double b) {
  const double lqa = log_q(a);
  const double lqb = log_q(b);
  const double log_z = std::isinf(b) ? lqa : lqa + std::log(-std::expm1(lqb - lqa));
  const double A = std::exp(log_phi(a) - log_z);
  const double B = std::isinf(b) ? 0.0 : std::exp(log_phi(b) - log_z);
  const double bB = std::isinf(b) ? 0.0 : b * B;
  const double mean = A - B;
  double var = 1.0 + a * A - bB - mean * mean;
  return {mean, var};
}

}  // namespace

ScalarMoments truncated_normal_moments(double mu, double s, double lo, double hi) {
  require(s > 0.0, "truncated_normal_moments: scale must be positive");
  require(lo < hi, "truncated_normal_moments: empty interval");
  const double a = (lo - mu) / s;
  const double b = (hi - mu) / s;
  ScalarMoments std_m;
  if (a >= 0.0) {
    std_m = right_tail_moments(a, b);
  } else if (b <= 0.0) {
    std_m = right_tail_moments(-b, -a);
    std_m.mean = -std_m.mean;
  } else {
    const double z = 1.0 - q(b) - q(-a);
    const double pa = std::isinf(a) ? 0.0 : std::exp(log_phi(a));
    const double pb = std::isinf(b) ? 0.0 : std::exp(log_phi(b));
    const double apa = std::isinf(a) ? 0.0 : a * pa;
    const double bpb = std::isinf(b) ? 0.0 : b * pb;
    std_m.mean = (pa - pb) / z;
    std_m.variance = 1.0 + (apa - bpb) / z - std_m.mean * std_m.mean;
  }
  // Roundoff can push the standardised variance of a far-tail bin below zero.
  const double var = std::max(std_m.variance, 1e-300);
  return {mu + s * std_m.mean, s * s * var};
}

ScalarMoments gaussian_moments(double y, double z_bar, double nu_bar, double sigma_y2) {
  const double prec = 1.0 / sigma_y2 + 1.0 / nu_bar;
  return {(y / sigma_y2 + z_bar / nu_bar) / prec, 1.0 / prec};
}

ScalarMoments dequantization_moments(double lo, double hi, double z_bar, double nu_bar,
                                     double sigma_y2) {
  // t = z + sigma_y w is N(z_bar, nu_bar + sigma_y2); condition on t in the bin
  // and regress z on t.
  const double vt = nu_bar + sigma_y2;
  const ScalarMoments t = truncated_normal_moments(z_bar, std::sqrt(vt), lo, hi);
  const double k = nu_bar / vt;
  return {z_bar + k * (t.mean - z_bar), nu_bar * sigma_y2 / vt + k * k * t.variance};
}

ScalarMoments real_magnitude_moments(double y, double z_bar, double nu_bar, double sigma_y2) {
  const double prec = 1.0 / sigma_y2 + 1.0 / nu_bar;
  const double v = 1.0 / prec;
  const double s = std::sqrt(v);
  const double vm = sigma_y2 + nu_bar;
  struct Branch {
    double log_w;
    ScalarMoments m;
  };
  Branch br[2];
  for (int b = 0; b < 2; ++b) {
    const double sign = b == 0 ? 1.0 : -1.0;
    const double mb = v * (sign * y / sigma_y2 + z_bar / nu_bar);
    const double lik = -0.5 * (sign * y - z_bar) * (sign * y - z_bar) / vm;
    const double mass = b == 0 ? log_q(-mb / s) : log_q(mb / s);
    br[b].log_w = lik + mass;
    br[b].m = b == 0 ? truncated_normal_moments(mb, s, 0.0, kInf)
                     : truncated_normal_moments(mb, s, -kInf, 0.0);
  }
  const double top = std::max(br[0].log_w, br[1].log_w);
  const double w0 = std::exp(br[0].log_w - top), w1 = std::exp(br[1].log_w - top);
  const double p0 = w0 / (w0 + w1), p1 = w1 / (w0 + w1);
  const double mean = p0 * br[0].m.mean + p1 * br[1].m.mean;
  const double var = p0 * (br[0].m.variance + std::pow(br[0].m.mean - mean, 2)) +
                     p1 * (br[1].m.variance + std::pow(br[1].m.mean - mean, 2));
  return {mean, var};
}

namespace {

struct RadialDensity {
  double y, a, nu, s2, kappa;

  double log_f(double t) const {
    if (t <= 0.0) return -kInf;
    return std::log(t) - 0.5 * (y - t) * (y - t) / s2 - 0.5 * (t - a) * (t - a) / nu +
           std::log(gsl_sf_bessel_I0_scaled(kappa * t));
  }
  double bessel_ratio(double t) const {
    const double x = kappa * t;
    if (x == 0.0) return 0.0;
    return gsl_sf_bessel_I1_scaled(x) / gsl_sf_bessel_I0_scaled(x);
  }
  double dlog_f(double t) const {
    return 1.0 / t + (y - t) / s2 - (t - a) / nu + kappa * (bessel_ratio(t) - 1.0);
  }
  double d2log_f(double t) const {
    const double x = kappa * t;
    const double r = bessel_ratio(t);
    const double dr = x == 0.0 ? 0.5 : 1.0 - r / x - r * r;
    return -1.0 / (t * t) - 1.0 / s2 - 1.0 / nu + kappa * kappa * dr;
  }
};

struct HermiteRule {
  std::vector<double> nodes, weights;
};

// Nodes and weights for the weight exp(-x^2).
const HermiteRule& hermite_rule() {
  static const HermiteRule rule = [] {
    constexpr size_t n = 16;
    gsl_integration_fixed_workspace* w =
        gsl_integration_fixed_alloc(gsl_integration_fixed_hermite, n, 0.0, 1.0, 0.0, 0.0);
    HermiteRule r;
    r.nodes.assign(gsl_integration_fixed_nodes(w), gsl_integration_fixed_nodes(w) + n);
    r.weights.assign(gsl_integration_fixed_weights(w), gsl_integration_fixed_weights(w) + n);
    gsl_integration_fixed_free(w);
    return r;
  }();
  return rule;
}

double find_mode(const RadialDensity& f, double upper) {
  double lo = std::min(1e-300 + upper * 1e-15, upper);
  double hi = upper;
  while (f.dlog_f(hi) > 0.0) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f.dlog_f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

ComplexMoments magnitude_moments_quadrature(double y, std::complex<double> z_bar, double nu_bar,
                                            double sigma_y2) {
  require(nu_bar > 0.0 && sigma_y2 > 0.0, "magnitude channel: variances must be positive");
  const double a = std::abs(z_bar);
  const RadialDensity f{std::max(y, 0.0), a, nu_bar, sigma_y2, a / nu_bar};
  const double width = 1.0 / std::sqrt(1.0 / sigma_y2 + 1.0 / nu_bar);
  const double t_star = find_mode(f, std::max({y, a, width}) + 10.0 * width);
  const double log_peak = f.log_f(t_star);

  using boost::math::quadrature::gauss_kronrod;
  double half = 12.0 * std::max(width, 1e-300);
  for (int attempt = 0;; ++attempt) {
    const double lo = std::max(0.0, t_star - half);
    const double hi = t_star + half;
    const bool lo_ok = lo == 0.0 || f.log_f(lo) < log_peak - 40.0;
    const bool hi_ok = f.log_f(hi) < log_peak - 40.0;
    if (lo_ok && hi_ok) {
      auto moment = [&](int k) {
        auto g = [&](double t) {
          const double base = std::exp(f.log_f(t) - log_peak);
          if (k == 0) return base;
          if (k == 1) return base * t * f.bessel_ratio(t);
          return base * t * t;
        };
        return gauss_kronrod<double, 61>::integrate(g, lo, t_star, 15, 1e-13) +
               gauss_kronrod<double, 61>::integrate(g, t_star, hi, 15, 1e-13);
      };
      const double m0 = moment(0);
      const double m1 = moment(1) / m0;
      const double m2 = moment(2) / m0;
      const std::complex<double> dir = a > 0.0 ? z_bar / a : std::complex<double>(1.0, 0.0);
      ComplexMoments out;
      out.mean = m1 * dir;
      out.variance = std::max(0.5 * (m2 - m1 * m1), 1e-300);
      return out;
    }
    if (attempt == 1) {
      throw NumericalError("magnitude channel quadrature: posterior mass extends beyond the widened range (y=" +
                           std::to_string(y) + ", |z_bar|=" + std::to_string(a) +
                           ", nu_bar=" + std::to_string(nu_bar) + ")");
    }
    half *= 4.0;
  }
}

bool magnitude_moments_laplace(double y, std::complex<double> z_bar, double nu_bar,
                               double sigma_y2, ComplexMoments& out) {
  const double a = std::abs(z_bar);
  if (a <= 0.0 || !(nu_bar > 0.0) || !(sigma_y2 > 0.0)) return false;
  const RadialDensity f{std::max(y, 0.0), a, nu_bar, sigma_y2, a / nu_bar};
  const double prec = 1.0 / sigma_y2 + 1.0 / nu_bar;
  // Newton on the radial log-density from the joint Cartesian mode, kept
  // inside a sign bracket of the derivative.
  double t = (f.y / sigma_y2 + a / nu_bar) / prec;
  if (!(t > 0.0)) t = 1.0 / std::sqrt(prec);
  double lo = 0.0, hi = t;
  while (f.dlog_f(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 100; ++it) {
    const double g = f.dlog_f(t);
    (g > 0.0 ? lo : hi) = t;
    double next = t - g / f.d2log_f(t);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool done = std::abs(next - t) <= 1e-12 * t;
    t = next;
    if (done || hi - lo <= 1e-14 * hi) break;
  }
  const double curvature = -f.d2log_f(t);
  if (!(curvature > 0.0) || !std::isfinite(curvature)) return false;
  // Radial moments by Gauss-Hermite nodes placed on the Laplace Gaussian.
  const auto& gh = hermite_rule();
  const double scale = std::sqrt(2.0 / curvature);
  const double log_peak = f.log_f(t);
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (size_t i = 0; i < gh.nodes.size(); ++i) {
    const double ti = t + scale * gh.nodes[i];
    if (ti <= 0.0) continue;
    const double w = gh.weights[i] * std::exp(f.log_f(ti) - log_peak + gh.nodes[i] * gh.nodes[i]);
    m0 += w;
    m1 += w * ti * f.bessel_ratio(ti);
    m2 += w * ti * ti;
  }
  if (!(m0 > 0.0) || !std::isfinite(m0 + m1 + m2)) return false;
  m1 /= m0;
  m2 /= m0;
  out.mean = m1 * (z_bar / a);
  out.variance = std::max(0.5 * (m2 - m1 * m1), 1e-300);
  return true;
}

ComplexMoments magnitude_moments(double y, std::complex<double> z_bar, double nu_bar,
                                 double sigma_y2, MagnitudeMethod method) {
  ComplexMoments out;
  if (method == MagnitudeMethod::kLaplace &&
      magnitude_moments_laplace(y, z_bar, nu_bar, sigma_y2, out))
    return out;
  return magnitude_moments_quadrature(y, z_bar, nu_bar, sigma_y2);
}

MeasurementChannel MeasurementChannel::gaussian(double sigma_y) {
  require(sigma_y > 0.0, "gaussian channel: sigma_y must be positive");
  return MeasurementChannel(ChannelKind::kGaussian, sigma_y);
}

MeasurementChannel MeasurementChannel::magnitude(double sigma_y, MagnitudeMethod method) {
  require(sigma_y > 0.0, "magnitude channel: sigma_y must be positive");
  MeasurementChannel ch(ChannelKind::kMagnitude, sigma_y);
  ch.method_ = method;
  return ch;
}

MeasurementChannel MeasurementChannel::dequantization(std::vector<double> edges, double sigma_y) {
  require(sigma_y > 0.0, "dequantization channel: sigma_y must be positive");
  require(!edges.empty(), "dequantization channel: need at least one bin edge");
  for (size_t i = 1; i < edges.size(); ++i)
    require(edges[i] > edges[i - 1], "dequantization channel: bin edges must be strictly increasing");
  MeasurementChannel ch(ChannelKind::kDequantization, sigma_y);
  ch.edges_ = std::move(edges);
  return ch;
}

Index MeasurementChannel::measurement_size(Index m, bool complex_operator) const {
  if (kind_ == ChannelKind::kMagnitude && complex_operator) return m / 2;
  return m;
}

std::pair<double, double> MeasurementChannel::bin(Index index) const {
  const Index nb = static_cast<Index>(edges_.size()) + 1;
  require(index >= 0 && index < nb, "dequantization channel: bin index out of range");
  const double lo = index == 0 ? -kInf : edges_[static_cast<size_t>(index - 1)];
  const double hi = index == nb - 1 ? kInf : edges_[static_cast<size_t>(index)];
  return {lo, hi};
}

MeasurementChannel::Moments MeasurementChannel::posterior(const Measurement& y,
                                                          const Measurement& z_bar, double nu_bar,
                                                          bool complex_operator) const {
  require(nu_bar > 0.0, "channel posterior: nu_bar must be positive");
  require(y.size() == measurement_size(z_bar.size(), complex_operator),
          "channel posterior: measurement length does not match z_bar");
  const double s2 = sigma_y_ * sigma_y_;
  Moments out;
  out.z_hat.resize(z_bar.size());
  double total_var = 0.0;
  switch (kind_) {
    case ChannelKind::kGaussian:
      for (Index j = 0; j < z_bar.size(); ++j) {
        const auto m = gaussian_moments(y[j], z_bar[j], nu_bar, s2);
        out.z_hat[j] = m.mean;
        total_var += m.variance;
      }
      break;
    case ChannelKind::kDequantization:
      require(!complex_operator, "dequantization channel requires a real-valued operator");
      for (Index j = 0; j < z_bar.size(); ++j) {
        const double idx = y[j];
        require(idx == std::floor(idx), "dequantization channel: measurements must be bin indices");
        const auto [lo, hi] = bin(static_cast<Index>(idx));
        const auto m = dequantization_moments(lo, hi, z_bar[j], nu_bar, s2);
        out.z_hat[j] = m.mean;
        total_var += m.variance;
      }
      break;
    case ChannelKind::kMagnitude:
      if (complex_operator) {
        for (Index j = 0; j < y.size(); ++j) {
          const std::complex<double> zb(z_bar[2 * j], z_bar[2 * j + 1]);
          const auto m = magnitude_moments(y[j], zb, nu_bar, s2, method_);
          out.z_hat[2 * j] = m.mean.real();
          out.z_hat[2 * j + 1] = m.mean.imag();
          total_var += 2.0 * m.variance;
        }
      } else {
        for (Index j = 0; j < z_bar.size(); ++j) {
          const auto m = real_magnitude_moments(y[j], z_bar[j], nu_bar, s2);
          out.z_hat[j] = m.mean;
          total_var += m.variance;
        }
      }
      break;
  }
  out.variance = total_var / static_cast<double>(z_bar.size());
  return out;
}

}  // namespace ddfire::glm
