#include "ddfire/verify.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>

#include "ddfire/baselines.hpp"
#include "ddfire/channels.hpp"
#include "ddfire/config.hpp"
#include "ddfire/errors.hpp"
#include "ddfire/experiment.hpp"
#include "ddfire/fire.hpp"
#include "ddfire/glm.hpp"
#include "ddfire/metrics.hpp"
#include "ddfire/oracles.hpp"
#include "ddfire/priors.hpp"
#include "ddfire/schedule.hpp"

namespace ddfire::verify {

using operators::LinearOperator;

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(double v, int precision = 3) {
  std::ostringstream o;
  o.precision(precision);
  o << v;
  return o.str();
}

template <typename Body>
CheckResult timed(int id, std::string name, double budget_seconds, Body&& body) {
  CheckResult r;
  r.id = id;
  r.name = std::move(name);
  const auto t0 = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail += (r.detail.empty() ? "" : "; ") + std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  if (budget_seconds > 0.0 && r.seconds > budget_seconds) {
    r.passed = false;
    r.detail += "; runtime " + fmt(r.seconds) + " s exceeds " + fmt(budget_seconds) + " s";
  }
  return r;
}

Matrix random_dense(Index m, Index d, RandomStream rng) {
  Matrix A(m, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < m; ++i) A(i, j) = scale * rng.normal();
  return A;
}

priors::GaussianMixture make_gmm(RandomStream rng, int components, Index block, double spread,
                                 double offset, double variance) {
  priors::GaussianMixture g;
  for (int c = 0; c < components; ++c) {
    g.weights.push_back(1.0 / components);
    g.means.push_back(Signal::Constant(block, offset) + spread * rng.normal(block));
    g.variances.push_back(variance);
  }
  return g;
}

Matrix gaussian_kernel(int size, double width) {
  Matrix k(size, size);
  const double c = 0.5 * (size - 1);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      k(i, j) = std::exp(-0.5 * ((i - c) * (i - c) + (j - c) * (j - c)) / (width * width));
  return k / k.sum();
}

// d = 8, m = 5 instance with an isotropic Gaussian prior, shared by C2 and C8.
struct GaussianProblem {
  Matrix A;
  LinearOperator op;  // with SVD
  priors::IsotropicGaussian prior;
  std::shared_ptr<priors::DenoiserModel> denoiser;
  Signal x0;
  Measurement y;
  double sigma_y = 0.1;
};

GaussianProblem make_gaussian_problem(RandomStream root) {
  GaussianProblem p;
  const Index d = 8, m = 5;
  p.A = random_dense(m, d, root.derive("operator"));
  p.op = LinearOperator::dense(p.A).with_svd();
  p.prior = {Signal::Constant(d, 0.5), 1.0};
  p.denoiser = std::make_shared<priors::DenoiserModel>(
      p.prior, d, priors::exact_nu_table(p.prior, priors::log_spaced(1e-4, 1e3, 40)));
  RandomStream truth = root.derive("truth");
  p.x0 = priors::sample(p.prior, d, truth);
  p.y = p.op.apply(p.x0) + p.sigma_y * truth.normal(m);
  return p;
}

// 16x16 GMM-patch images, CDP (L = 4) with shot noise, shared by C4 and C9.
struct PhaseRetrieval {
  ImageShape shape{16, 16};
  double alpha_shot = 45.0;
  priors::PriorSpec prior;
  std::shared_ptr<priors::DenoiserModel> denoiser;
  ddim::FirePlan plan;
  double signal_power = 1.0;
};

PhaseRetrieval make_phase_retrieval(RandomStream root) {
  PhaseRetrieval pr;
  const Index d = pr.shape.size();
  pr.prior = make_gmm(root.derive("prior"), 4, 16, 40.0, 128.0, 100.0);
  RandomStream table_rng = root.derive("nu-table");
  pr.denoiser = std::make_shared<priors::DenoiserModel>(
      pr.prior, d,
      priors::build_nu_table(pr.prior, d, priors::log_spaced(0.1, 3000.0, 40), 500, table_rng));
  pr.plan = ddim::plan_schedule(100, 0.5, ddim::geometric_sigmas(1.0, 1e6, 30));
  pr.signal_power = priors::second_moment(pr.prior);
  return pr;
}

struct PhaseRetrievalTrial {
  LinearOperator op;
  Signal x0;
  Measurement y;
  ddim::Problem problem;
};

PhaseRetrievalTrial phase_retrieval_trial(const PhaseRetrieval& pr, RandomStream ts) {
  PhaseRetrievalTrial t;
  RandomStream op_rng = ts.derive("operator");
  t.op = operators::make_cdp(pr.shape, op_rng, 4);
  RandomStream truth = ts.derive("truth");
  t.x0 = priors::sample(pr.prior, pr.shape.size(), truth);
  RandomStream meas = ts.derive("measurement");
  t.y = glm::shot_noise_measure(t.op.apply(t.x0), pr.alpha_shot, true, meas);
  const auto channel = glm::MeasurementChannel::magnitude(glm::shot_noise_sigma_y(pr.alpha_shot));
  t.problem = ddim::Problem{t.y, t.op, channel.sigma_y(), channel};
  return t;
}

double magnitude_residual(const Measurement& y, const LinearOperator& op, const Signal& x) {
  return (y - glm::magnitudes(op.apply(x), op.is_complex())).squaredNorm() /
         static_cast<double>(y.size());
}

// --- brute-force channel oracles -------------------------------------------

struct ComplexOracle {
  std::complex<double> mean;
  double variance;
};

// 2-D Cartesian grid integration of N(z; z_bar, nu I) N(y; |z|, s2).
ComplexOracle magnitude_oracle(double y, std::complex<double> z_bar, double nu, double s2) {
  auto log_p = [&](double u, double v) {
    const double du = u - z_bar.real(), dv = v - z_bar.imag();
    const double r = std::hypot(u, v);
    return -0.5 * (du * du + dv * dv) / nu - 0.5 * (y - r) * (y - r) / s2;
  };
  // Coarse pass locates the region holding the mass.
  const double R = std::max(y, std::abs(z_bar)) + 10.0 * std::max(std::sqrt(s2), std::sqrt(nu));
  const int nc = 500;
  const double hc = 2.0 * R / nc;
  double peak = -INFINITY;
  for (int i = 0; i <= nc; ++i)
    for (int j = 0; j <= nc; ++j) peak = std::max(peak, log_p(-R + i * hc, -R + j * hc));
  double u0 = INFINITY, u1 = -INFINITY, v0 = INFINITY, v1 = -INFINITY;
  for (int i = 0; i <= nc; ++i)
    for (int j = 0; j <= nc; ++j) {
      const double u = -R + i * hc, v = -R + j * hc;
      if (log_p(u, v) > peak - 60.0) {
        u0 = std::min(u0, u);
        u1 = std::max(u1, u);
        v0 = std::min(v0, v);
        v1 = std::max(v1, v);
      }
    }
  u0 -= 2 * hc;
  u1 += 2 * hc;
  v0 -= 2 * hc;
  v1 += 2 * hc;
  const int nf = 700;
  const double hu = (u1 - u0) / nf, hv = (v1 - v0) / nf;
  double m0 = 0.0, mu = 0.0, mv = 0.0;
  std::vector<double> w(static_cast<size_t>((nf + 1) * (nf + 1)));
  for (int i = 0; i <= nf; ++i)
    for (int j = 0; j <= nf; ++j) {
      const double u = u0 + i * hu, v = v0 + j * hv;
      const double p = std::exp(log_p(u, v) - peak);
      w[static_cast<size_t>(i * (nf + 1) + j)] = p;
      m0 += p;
      mu += p * u;
      mv += p * v;
    }
  mu /= m0;
  mv /= m0;
  double var = 0.0;
  for (int i = 0; i <= nf; ++i)
    for (int j = 0; j <= nf; ++j) {
      const double du = u0 + i * hu - mu, dv = v0 + j * hv - mv;
      var += w[static_cast<size_t>(i * (nf + 1) + j)] * (du * du + dv * dv);
    }
  return {{mu, mv}, 0.5 * var / m0};
}

// P(lo <= z + sigma w < hi) without cancellation on either side of the bin.
double bin_probability(double z, double sigma, double lo, double hi) {
  auto upper_tail = [](double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); };
  if (z < lo) return upper_tail((lo - z) / sigma) - upper_tail((hi - z) / sigma);
  if (z >= hi) return upper_tail((z - hi) / sigma) - upper_tail((z - lo) / sigma);
  return 1.0 - upper_tail((z - lo) / sigma) - upper_tail((hi - z) / sigma);
}

glm::ScalarMoments scalar_oracle(const std::function<double(double)>& log_lik, double z_bar,
                                 double nu, double lo, double hi) {
  const int n = 200000;
  const double h = (hi - lo) / n;
  std::vector<double> lp(static_cast<size_t>(n + 1));
  double peak = -INFINITY;
  for (int i = 0; i <= n; ++i) {
    const double z = lo + i * h;
    lp[static_cast<size_t>(i)] = -0.5 * (z - z_bar) * (z - z_bar) / nu + log_lik(z);
    peak = std::max(peak, lp[static_cast<size_t>(i)]);
  }
  double m0 = 0.0, m1 = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double p = std::exp(lp[static_cast<size_t>(i)] - peak);
    m0 += p;
    m1 += p * (lo + i * h);
  }
  m1 /= m0;
  double var = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double dz = lo + i * h - m1;
    var += std::exp(lp[static_cast<size_t>(i)] - peak) * dz * dz;
  }
  return {m1, var / m0};
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

// --- 1 ----------------------------------------------------------------------

CheckResult criterion_1(std::uint64_t seed) {
  return timed(1, "ideal-denoiser decay", 5.0, [&](CheckResult& r) {
    constexpr int trials = 100, N = 15;
    const double rho = 2.0, sigma_init2 = 1e3, sigma_y = 30.0;
    const Index d = 8, m = 16;
    const RandomStream root = RandomStream(seed).derive("criterion-1");
    Vector mean_log = Vector::Zero(N);
    int violations = 0;
    for (int t = 0; t < trials; ++t) {
      const RandomStream ts = root.derive(static_cast<std::uint64_t>(t));
      const LinearOperator op = LinearOperator::dense(random_dense(m, d, ts.derive("operator"))).with_svd();
      RandomStream truth = ts.derive("truth");
      const Signal x0 = truth.normal(d);
      const Measurement y = op.apply(x0) + sigma_y * truth.normal(m);
      const priors::IdealDenoiser den(x0, 0.2);
      fire::FireSettings fs;
      fs.nu_mode = fire::NuMode::kTable;
      fs.solver = fire::LinearSolver::kSvd;
      fs.truth = x0;
      RandomStream rng = ts.derive("solver");
      const Signal r_init = x0 + std::sqrt(sigma_init2) * rng.normal(d);
      const auto res = fire::fire_slm(y, op, sigma_y, den, r_init, std::sqrt(sigma_init2), N, rho, fs, rng);
      for (const auto& row : res.record.rows) {
        if (row.mse > sigma_init2 / std::pow(rho, row.iter - 1)) ++violations;
        mean_log[row.iter - 1] += std::log(row.mse) / trials;
      }
    }
    const Vector n = Vector::LinSpaced(N, 1.0, N);
    const double slope = metrics::fit_slope(n, mean_log);
    const double target = -std::log(rho);
    const bool slope_ok = std::abs(slope - target) <= 0.1 * std::abs(target);
    r.passed = violations == 0 && slope_ok;
    r.detail = "bound violations " + std::to_string(violations) + "/" +
               std::to_string(trials * N) + ", log-MSE slope " + fmt(slope, 4) + " vs " +
               fmt(target, 4) + " (10% band)";
  });
}

// --- 2 ----------------------------------------------------------------------

CheckResult criterion_2(std::uint64_t seed) {
  return timed(2, "Gaussian posterior exactness", 120.0, [&](CheckResult& r) {
    const RandomStream root = RandomStream(seed).derive("criterion-2");
    const GaussianProblem p = make_gaussian_problem(root);
    const Index d = p.op.input_size();
    fire::FireSettings fs;
    fs.nu_mode = fire::NuMode::kTable;
    fs.solver = fire::LinearSolver::kSvd;

    // (a) weakly informative side information; average over renoising streams
    const double sigma_init = 100.0;
    RandomStream side = root.derive("side-information");
    const Signal r_init = p.x0 + sigma_init * side.normal(d);
    const auto cond = oracles::gaussian_conditional(p.prior.mean, p.prior.variance, p.op,
                                                    p.sigma_y, p.y, r_init, sigma_init);
    constexpr int runs = 10000;
    Signal acc = Signal::Zero(d);
    for (int t = 0; t < runs; ++t) {
      RandomStream rng = root.derive("fire").derive(static_cast<std::uint64_t>(t));
      acc += fire::fire_slm(p.y, p.op, p.sigma_y, *p.denoiser, r_init, sigma_init, 20, 2.0, fs, rng).x;
    }
    const double rel_a = metrics::relative_l2(acc / runs, cond.mean);

    // (b) DDfire chains against the posterior mean given y
    const auto post = oracles::gaussian_posterior(p.prior.mean, p.prior.variance, p.op, p.sigma_y, p.y);
    const auto plan = ddim::plan_schedule(40, 0.0, ddim::geometric_sigmas(1e-3, 1e4, 20));
    const ddim::Problem problem{p.y, p.op, p.sigma_y, std::nullopt};
    constexpr int chains = 10000;
    Signal s1 = Signal::Zero(d), s2 = Signal::Zero(d);
    for (int t = 0; t < chains; ++t) {
      RandomStream rng = root.derive("ddfire").derive(static_cast<std::uint64_t>(t));
      const Signal x = ddim::ddfire_sample(problem, *p.denoiser, plan, 1.0, fs, rng).x;
      s1 += x;
      s2 += x.cwiseProduct(x);
    }
    const Signal mean = s1 / chains;
    const Signal se = ((s2 / chains - mean.cwiseProduct(mean)) / chains).cwiseSqrt();
    double worst_z = 0.0;
    for (Index i = 0; i < d; ++i) worst_z = std::max(worst_z, std::abs(mean[i] - post.mean[i]) / se[i]);

    r.passed = rel_a <= 0.01 && worst_z < 3.0;
    r.detail = "(a) FIRE mean vs E{x0|r,y}: rel L2 " + fmt(rel_a) + " (<= 0.01, " +
               std::to_string(runs) + " runs); (b) DDfire K=20 N_tot=40: worst |error|/SE " +
               fmt(worst_z) + " (< 3, " + std::to_string(chains) + " chains)";
  });
}

// --- 3 ----------------------------------------------------------------------

SpectraResult spectra_experiment(std::uint64_t seed, int trials) {
  require(trials >= 2, "spectra_experiment: need at least two trials");
  SpectraResult out;
  out.trials = trials;
  out.nu = 0.16;
  out.sigma_y2 = 1e-6;
  out.sigma2 = 0.28;  // max{sigma_prev^2 / rho, nu} for sigma_prev^2 = 0.56, rho = 2
  const double sy = std::sqrt(out.sigma_y2);
  const ImageShape shape{1, 16};
  Matrix kernel(1, 3);
  kernel << 0.25, 0.5, 0.25;
  const LinearOperator op = LinearOperator::circular_convolution(shape, kernel).with_svd();
  const Index d = op.input_size();
  const auto& svd = op.svd();
  out.s = svd.s;
  out.lambda_exact = fire::renoise_spectrum(out.s, out.sigma2, out.nu, sy, sy);
  const double xi = fire::approx_xi(op.s_max(), out.nu, sy, sy);
  out.lambda_approx = (out.sigma2 - out.nu + xi * out.s.array().square()).matrix();
  out.s.minCoeff(&out.null_index);
  out.s.maxCoeff(&out.top_index);
  const Vector v_null = svd.V.col(out.null_index), v_top = svd.V.col(out.top_index);

  const RandomStream root = RandomStream(seed).derive("spectra");
  RandomStream truth = root.derive("truth");
  const Signal x0 = truth.normal(d);
  RandomStream rng = root.derive("draws");
  Matrix acc_svd = Matrix::Zero(d, d), acc_white = Matrix::Zero(d, d);
  Vector sum_svd = Vector::Zero(d), sum_white = Vector::Zero(d);
  double null_sq = 0.0, top_sq = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Signal x_bar = x0 + std::sqrt(out.nu) * rng.normal(d);
    const Measurement y = op.apply(x0) + sy * rng.normal(op.output_size());
    const Signal err = fire::mmse_update_svd(y, op, x_bar, sy, out.nu) - x0;
    const Vector e_svd = err + fire::colored_noise_svd(op, out.sigma2, out.nu, sy, sy, rng);
    const Vector e_white = err + std::sqrt(out.sigma2 - out.nu) * rng.normal(d);
    const Vector c_apx = fire::colored_noise_approx(op, out.sigma2, out.nu, sy, sy, rng);
    acc_svd.selfadjointView<Eigen::Lower>().rankUpdate(e_svd);
    acc_white.selfadjointView<Eigen::Lower>().rankUpdate(e_white);
    sum_svd += e_svd;
    sum_white += e_white;
    null_sq += std::pow(v_null.dot(c_apx), 2);
    top_sq += std::pow(v_top.dot(c_apx), 2);
  }
  auto eig = [&](const Matrix& acc, const Vector& sum) {
    const Vector mean = sum / trials;
    Matrix cov = acc.selfadjointView<Eigen::Lower>();
    cov = (cov - trials * mean * mean.transpose()) / (trials - 1);
    return Vector(Eigen::SelfAdjointEigenSolver<Matrix>(cov, Eigen::EigenvaluesOnly).eigenvalues());
  };
  out.eig_svd = eig(acc_svd, sum_svd);
  out.eig_white = eig(acc_white, sum_white);
  out.approx_var_null = null_sq / trials;
  out.approx_var_top = top_sq / trials;
  return out;
}

void write_spectra_csv(const SpectraResult& r, std::ostream& out) {
  // Per singular direction (descending s), then the sorted empirical eigenvalues.
  std::vector<Index> order(static_cast<size_t>(r.s.size()));
  for (Index i = 0; i < r.s.size(); ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return r.s[a] > r.s[b]; });
  out.precision(12);
  out << "index,s,lambda_exact,lambda_approx,eig_cov_svd_renoise,eig_cov_white_renoise\n";
  const Index n = r.s.size();
  for (Index i = 0; i < n; ++i) {
    const Index k = order[static_cast<size_t>(i)];
    out << i << ',' << r.s[k] << ',' << r.lambda_exact[k] << ',' << r.lambda_approx[k] << ','
        << r.eig_svd[n - 1 - i] << ',' << r.eig_white[n - 1 - i] << '\n';
  }
}

CheckResult criterion_3(std::uint64_t seed) {
  return timed(3, "renoising whiteness", 0.0, [&](CheckResult& r) {
    const SpectraResult s = spectra_experiment(seed, 100000);
    const double lo = s.eig_svd.minCoeff() / s.sigma2, hi = s.eig_svd.maxCoeff() / s.sigma2;
    const double null_ratio = s.approx_var_null / s.lambda_exact[s.null_index];
    const double top_ratio = s.approx_var_top / s.lambda_exact[s.top_index];
    const bool white = lo >= 0.95 && hi <= 1.05;
    const bool ends = std::abs(null_ratio - 1.0) <= 0.05 && std::abs(top_ratio - 1.0) <= 0.05;
    r.passed = white && ends;
    r.detail = "SVD renoise eig(cov)/sigma^2 in [" + fmt(lo, 4) + ", " + fmt(hi, 4) +
               "] (white renoise would give [" + fmt(s.eig_white.minCoeff() / s.sigma2, 3) + ", " +
               fmt(s.eig_white.maxCoeff() / s.sigma2, 3) + "]); SVD-free noise / exact lambda: null " +
               fmt(null_ratio, 4) + ", top " + fmt(top_ratio, 4);
  });
}

// --- 4 ----------------------------------------------------------------------

TrackingResult tracking_experiment(std::uint64_t seed, int slm_trials, int glm_trials) {
  TrackingResult out;
  const RandomStream root = RandomStream(seed).derive("tracking");
  {
    const Index d = 64, m = 128;
    const double sigma_y = 0.01, rho = 1.5, sigma_init = 3.0;
    const priors::PriorSpec prior = make_gmm(root.derive("prior"), 4, 16, 1.0, 0.0, 0.05);
    RandomStream table_rng = root.derive("nu-table");
    const priors::DenoiserModel den(
        prior, d, priors::build_nu_table(prior, d, priors::log_spaced(1e-3, 30.0, 40), 2000, table_rng));
    for (int t = 0; t < slm_trials; ++t) {
      const RandomStream ts = root.derive("slm").derive(static_cast<std::uint64_t>(t));
      const LinearOperator op = LinearOperator::dense(random_dense(m, d, ts.derive("operator")));
      RandomStream truth = ts.derive("truth");
      const Signal x0 = priors::sample(prior, d, truth);
      const Measurement y = op.apply(x0) + sigma_y * truth.normal(m);
      fire::FireSettings fs;
      fs.truth = x0;
      fs.signal_power = priors::second_moment(prior);
      fs.solver_name = "fire-slm";
      RandomStream rng = ts.derive("solver");
      const Signal r_init = x0 + sigma_init * rng.normal(d);
      auto rec = fire::fire_slm(y, op, sigma_y, den, r_init, sigma_init, 15, rho, fs, rng).record;
      rec.set_trial(t);
      out.slm.append(rec);
    }
  }
  {
    const PhaseRetrieval pr = make_phase_retrieval(root.derive("glm"));
    for (int t = 0; t < glm_trials; ++t) {
      const RandomStream ts = root.derive("glm-trial").derive(static_cast<std::uint64_t>(t));
      const PhaseRetrievalTrial trial = phase_retrieval_trial(pr, ts);
      fire::FireSettings fs;
      fs.truth = trial.x0;
      fs.signal_power = pr.signal_power;
      fs.solver_name = "ddfire-glm";
      RandomStream rng = ts.derive("solver");
      auto rec = ddim::ddfire_sample(trial.problem, *pr.denoiser, pr.plan, 1.0, fs, rng).record;
      rec.set_trial(t);
      out.glm.append(rec);
    }
  }
  return out;
}

CheckResult criterion_4(std::uint64_t seed) {
  return timed(4, "nu and sigma_bar_y^2 tracking", 0.0, [&](CheckResult& r) {
    const TrackingResult tr = tracking_experiment(seed, 20, 5);
    double acc = 0.0;
    int count = 0;
    for (const auto& row : tr.slm.rows) {
      acc += std::abs(row.nu - row.true_nu) / row.true_nu;
      ++count;
    }
    const double slm_err = acc / count;
    // geometric mean of sigma_bar^2 / ||y_bar - A x0||^2/m over each trial's iterations
    std::vector<double> log_sum, n;
    for (const auto& row : tr.glm.rows) {
      if (!(row.pseudo_resid_sq > 0.0) || !(row.sigma_y_bar2 > 0.0)) continue;
      const auto t = static_cast<size_t>(row.trial);
      if (log_sum.size() <= t) {
        log_sum.resize(t + 1, 0.0);
        n.resize(t + 1, 0.0);
      }
      log_sum[t] += std::log(row.sigma_y_bar2 / row.pseudo_resid_sq);
      n[t] += 1.0;
    }
    double lo = INFINITY, hi = 0.0;
    for (size_t t = 0; t < log_sum.size(); ++t) {
      const double ratio = std::exp(log_sum[t] / n[t]);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    r.passed = slm_err < 0.15 && !log_sum.empty() && lo >= 0.5 && hi <= 2.0;
    r.detail = "SLM/GMM: mean |nu - true|/true " + fmt(slm_err) + " (< 0.15, " +
               std::to_string(count) + " iterations); GLM/CDP: per-trial sigma_bar^2 ratio in [" +
               fmt(lo) + ", " + fmt(hi) + "] (within [0.5, 2])";
  });
}

// --- 5 ----------------------------------------------------------------------

CheckResult criterion_5(std::uint64_t) {
  return timed(5, "schedule planner", 0.0, [&](CheckResult& r) {
    const auto plan = ddim::plan_schedule(25, 0.4, ddim::geometric_sigmas(1e-4, 1e4, 10));
    bool ones_ok = true, thresh_ok = true;
    for (int k = 1; k <= plan.steps; ++k) {
      const int nk = plan.n_k[static_cast<size_t>(k - 1)];
      ones_ok = ones_ok && ((nk == 1) == (k <= plan.k_thresh));
      const double reached = plan.sigma_k2[static_cast<size_t>(k - 1)] / std::pow(plan.rho, nk - 1);
      thresh_ok = thresh_ok && reached <= plan.sigma_thresh2 * (1.0 + 1e-9);
    }
    bool rejects = false;
    try {
      ddim::plan_schedule(25, 0.4, ddim::geometric_sigmas(1e-4, 1e4, 17));
    } catch (const ContractViolation&) {
      rejects = true;
    }
    r.passed = plan.k_thresh == 4 && plan.total() <= 25 && ones_ok && thresh_ok && rejects;
    std::string nk;
    for (int v : plan.n_k) nk += (nk.empty() ? "" : ",") + std::to_string(v);
    r.detail = "K=10 delta=0.4: k_thresh " + std::to_string(plan.k_thresh) + ", N_k [" + nk +
               "] total " + std::to_string(plan.total()) + ", rho " + fmt(plan.rho, 5) +
               (ones_ok ? "" : ", N_k=1 pattern wrong") + (thresh_ok ? "" : ", threshold missed") +
               "; K=17 " + (rejects ? "rejected" : "NOT rejected");
  });
}

// --- 6 ----------------------------------------------------------------------

CheckResult criterion_6(std::uint64_t seed) {
  return timed(6, "GLM to SLM reduction", 0.0, [&](CheckResult& r) {
    const RandomStream root = RandomStream(seed).derive("criterion-6");
    const Index d = 32, m = 20;
    const double sigma_y = 0.05;
    const priors::PriorSpec prior = make_gmm(root.derive("prior"), 3, 8, 1.0, 0.0, 0.1);
    RandomStream table_rng = root.derive("nu-table");
    const priors::DenoiserModel den(
        prior, d, priors::build_nu_table(prior, d, priors::log_spaced(1e-3, 20.0, 30), 500, table_rng));
    const Matrix A = random_dense(m, d, root.derive("operator"));
    RandomStream truth = root.derive("truth");
    const Signal x0 = priors::sample(prior, d, truth);
    const LinearOperator plain = LinearOperator::dense(A);
    const Measurement y = plain.apply(x0) + sigma_y * truth.normal(m);
    const Signal r_init = x0 + 5.0 * truth.normal(d);
    const auto channel = glm::MeasurementChannel::gaussian(sigma_y);
    double worst = 0.0;
    int cases = 0;
    for (const bool svd : {true, false}) {
      const LinearOperator op = svd ? plain.with_svd() : plain;
      for (const auto mode : {fire::NuMode::kEstimate, fire::NuMode::kTable}) {
        for (const bool stochastic : {false, true}) {
          fire::FireSettings fs;
          fs.nu_mode = mode;
          fs.stochastic_denoising = stochastic;
          fs.signal_power = priors::second_moment(prior);
          // solve to machine precision so CG truncation does not mask the comparison
          fs.cg.speedup = false;
          fs.cg.tolerance = 1e-15;
          fs.cg.max_iterations = 1000;
          RandomStream a = root.derive("solver").derive(static_cast<std::uint64_t>(cases));
          RandomStream b = a;
          const Signal xs = fire::fire_slm(y, op, sigma_y, den, r_init, 5.0, 12, 1.8, fs, a).x;
          const Signal xg = glm::fire_glm(y, op, channel, den, r_init, 5.0, 12, 1.8, fs, b).x;
          worst = std::max(worst, metrics::relative_l2(xg, xs));
          ++cases;
        }
      }
    }
    r.passed = worst <= 1e-10;
    r.detail = "max rel L2 between GLM (Gaussian channel) and SLM outputs " + fmt(worst) +
               " over " + std::to_string(cases) + " SVD/CG x nu-mode x stochastic combinations (<= 1e-10)";
  });
}

// --- 7 ----------------------------------------------------------------------

CheckResult criterion_7(std::uint64_t) {
  return timed(7, "channel-moment oracles", 0.0, [&](CheckResult& r) {
    // complex magnitude: 5 x 5 x 4 grid of (y, |z_bar|, nu_bar), sigma_y^2 = 0.1
    double mag_err = 0.0;
    int mag_points = 0;
    const double s2 = 0.1;
    for (double y : {0.3, 0.8, 1.5, 3.0, 6.0})
      for (double a : {0.25, 0.7, 1.5, 3.0, 6.0})
        for (double nu : {0.05, 0.3, 1.0, 4.0}) {
          const std::complex<double> z_bar = std::polar(a, 0.9);
          const auto o = magnitude_oracle(y, z_bar, nu, s2);
          const auto q = glm::magnitude_moments(y, z_bar, nu, s2, glm::MagnitudeMethod::kQuadrature);
          mag_err = std::max({mag_err, std::abs(q.mean - o.mean) / std::abs(o.mean),
                              rel_err(q.variance, o.variance)});
          ++mag_points;
        }
    // dequantization: 4 bins x 5 z_bar x 5 nu_bar, sigma_y^2 = 0.05
    const auto channel = glm::MeasurementChannel::dequantization({-1.0, 0.0, 1.0}, std::sqrt(0.05));
    double deq_err = 0.0;
    int deq_points = 0;
    for (Index bin = 0; bin < 4; ++bin)
      for (double z_bar : {-1.5, -0.5, 0.3, 1.2, 2.0})
        for (double nu : {0.05, 0.2, 0.5, 1.0, 3.0}) {
          const auto [lo, hi] = channel.bin(bin);
          const double sy = channel.sigma_y();
          const double half = 14.0 * std::sqrt(nu);
          const auto o = scalar_oracle(
              [&](double z) { return std::log(std::max(bin_probability(z, sy, lo, hi), 1e-300)); },
              z_bar, nu, z_bar - half, z_bar + half);
          const auto q = glm::dequantization_moments(lo, hi, z_bar, nu, sy * sy);
          deq_err = std::max({deq_err, rel_err(q.mean, o.mean), rel_err(q.variance, o.variance)});
          ++deq_points;
        }
    // real magnitude (sign retrieval): 5 x 5 x 4 grid, sigma_y^2 = 0.1
    double real_err = 0.0;
    int real_points = 0;
    for (double y : {0.2, 0.7, 1.5, 3.0, 5.0})
      for (double z_bar : {-2.0, -0.6, 0.25, 1.0, 3.0})
        for (double nu : {0.05, 0.3, 1.0, 4.0}) {
          const double half = 14.0 * std::sqrt(nu) + std::abs(z_bar) + y;
          const auto o = scalar_oracle(
              [&](double z) { return -0.5 * (y - std::abs(z)) * (y - std::abs(z)) / s2; }, z_bar, nu,
              -half, half);
          const auto q = glm::real_magnitude_moments(y, z_bar, nu, s2);
          real_err = std::max({real_err, std::abs(q.mean - o.mean) / std::max(std::abs(o.mean), std::sqrt(o.variance)),
                               rel_err(q.variance, o.variance)});
          ++real_points;
        }
    // Laplace fast path in the high-SNR regime nu_bar <= |z_bar|^2
    double lap_err = 0.0;
    int lap_points = 0, fallbacks = 0;
    for (double a : {0.5, 2.0, 10.0, 64.0})
      for (double nr : {0.01, 0.1, 0.5, 1.0})
        for (double sr : {0.01, 0.1, 0.5, 1.0})
          for (double yr : {0.5, 1.0, 1.5}) {
            const double nu = nr * a * a, sy2 = sr * a * a, y = yr * a;
            const std::complex<double> z_bar = std::polar(a, -2.1);
            const auto q = glm::magnitude_moments_quadrature(y, z_bar, nu, sy2);
            glm::ComplexMoments l;
            if (!glm::magnitude_moments_laplace(y, z_bar, nu, sy2, l)) {
              ++fallbacks;
              continue;
            }
            lap_err = std::max({lap_err, std::abs(l.mean - q.mean) / std::abs(q.mean),
                                rel_err(l.variance, q.variance)});
            ++lap_points;
          }
    r.passed = mag_err <= 1e-3 && deq_err <= 1e-3 && real_err <= 1e-3 && lap_err < 0.05;
    r.detail = "max rel error vs brute force: magnitude " + fmt(mag_err) + " (" +
               std::to_string(mag_points) + " pts), dequantization " + fmt(deq_err) + " (" +
               std::to_string(deq_points) + " pts), real magnitude " + fmt(real_err) + " (" +
               std::to_string(real_points) + " pts); Laplace vs quadrature " + fmt(lap_err) +
               " over " + std::to_string(lap_points) + " high-SNR pts (" +
               std::to_string(fallbacks) + " fallbacks)";
  });
}

// --- 8 ----------------------------------------------------------------------

CheckResult criterion_8(std::uint64_t seed) {
  return timed(8, "CG path parity", 0.0, [&](CheckResult& r) {
    const RandomStream root = RandomStream(seed).derive("criterion-8");
    // (i) CG without speedup against the SVD solve
    fire::CgSettings exact;
    exact.speedup = false;
    exact.tolerance = 1e-10;
    exact.max_iterations = 5000;
    std::vector<LinearOperator> ops{
        LinearOperator::dense(random_dense(12, 20, root.derive("dense"))),
        LinearOperator::dense(random_dense(30, 10, root.derive("tall"))),
        LinearOperator::circular_convolution({8, 8}, gaussian_kernel(5, 1.0)),
        LinearOperator::decimated_convolution({8, 8}, gaussian_kernel(3, 0.8), 2)};
    double parity = 0.0;
    RandomStream draws = root.derive("draws");
    for (const auto& op : ops) {
      const LinearOperator with = op.with_svd();
      for (const double nu : {0.01, 0.5, 10.0}) {
        const Signal x_bar = draws.normal(op.input_size());
        const Measurement y = draws.normal(op.output_size());
        const Signal a = fire::mmse_update_svd(y, with, x_bar, 0.05, nu);
        const Signal b = fire::mmse_update_cg(y, op, x_bar, 0.05, nu, exact).x;
        parity = std::max(parity, metrics::relative_l2(b, a));
      }
    }

    // (ii) end-to-end DDfire MSE on the Gaussian-oracle problem, speedup on vs off
    const GaussianProblem p = make_gaussian_problem(root.derive("gaussian"));
    const LinearOperator plain = LinearOperator::dense(p.A);
    const ddim::Problem problem{p.y, plain, p.sigma_y, std::nullopt};
    const auto plan = ddim::plan_schedule(40, 0.0, ddim::geometric_sigmas(1e-3, 1e4, 20));
    double mse_on = 0.0, mse_off = 0.0;
    constexpr int chains = 2000;
    for (int t = 0; t < chains; ++t) {
      for (const bool speedup : {true, false}) {
        fire::FireSettings fs;
        fs.solver = fire::LinearSolver::kCg;
        fs.nu_mode = fire::NuMode::kTable;
        fs.cg.speedup = speedup;
        RandomStream rng = root.derive("chains").derive(static_cast<std::uint64_t>(t));
        const Signal x = ddim::ddfire_sample(problem, *p.denoiser, plan, 1.0, fs, rng).x;
        (speedup ? mse_on : mse_off) += metrics::mse(x, p.x0) / chains;
      }
    }
    const double degrade = (mse_on - mse_off) / mse_off;

    // (iii) CG iterations on an ill-conditioned deblur
    const ImageShape shape{16, 16};
    const Index d = shape.size();
    const priors::PriorSpec prior = make_gmm(root.derive("prior"), 4, 16, 1.0, 0.0, 0.05);
    RandomStream table_rng = root.derive("nu-table");
    const priors::DenoiserModel den(
        prior, d, priors::build_nu_table(prior, d, priors::log_spaced(1e-3, 20.0, 30), 500, table_rng));
    const LinearOperator blur = LinearOperator::circular_convolution(shape, gaussian_kernel(9, 2.0));
    const auto blur_plan = ddim::plan_schedule(30, 0.4, ddim::geometric_sigmas(1e-3, 1e2, 10));
    long iters_on = 0, iters_off = 0;
    double blur_mse_on = 0.0, blur_mse_off = 0.0;
    for (int t = 0; t < 3; ++t) {
      const RandomStream ts = root.derive("deblur").derive(static_cast<std::uint64_t>(t));
      RandomStream truth = ts.derive("truth");
      const Signal x0 = priors::sample(prior, d, truth);
      const double sy = 1e-3;
      const ddim::Problem pb{blur.apply(x0) + sy * truth.normal(d), blur, sy, std::nullopt};
      for (const bool speedup : {true, false}) {
        fire::FireSettings fs;
        fs.solver = fire::LinearSolver::kCg;
        fs.cg.speedup = speedup;
        fs.signal_power = priors::second_moment(prior);
        RandomStream rng = ts.derive("solver");
        const auto res = ddim::ddfire_sample(pb, den, blur_plan, 1.0, fs, rng);
        (speedup ? blur_mse_on : blur_mse_off) += metrics::mse(res.x, x0);
        for (const auto& row : res.record.rows)
          if (!std::isnan(row.cg_iters)) (speedup ? iters_on : iters_off) += static_cast<long>(row.cg_iters);
      }
    }
    const double drop = 1.0 - static_cast<double>(iters_on) / static_cast<double>(iters_off);

    r.passed = parity <= 1e-6 && degrade < 0.02 && drop >= 0.30;
    r.detail = "CG vs SVD rel " + fmt(parity) + " (<= 1e-6); DDfire MSE speedup on/off " +
               fmt(mse_on, 5) + "/" + fmt(mse_off, 5) + " degrade " + fmt(100.0 * degrade, 3) +
               "% (< 2%); deblur CG iterations " + std::to_string(iters_on) + " vs " +
               std::to_string(iters_off) + ", drop " + fmt(100.0 * drop, 3) + "% (>= 30%), deblur MSE on/off " +
               fmt(blur_mse_on / 3, 4) + "/" + fmt(blur_mse_off / 3, 4);
  });
}

// --- 9 ----------------------------------------------------------------------

CheckResult criterion_9(std::uint64_t seed) {
  return timed(9, "desk-scale phase retrieval", 0.0, [&](CheckResult& r) {
    const RandomStream root = RandomStream(seed).derive("criterion-9");
    const PhaseRetrieval pr = make_phase_retrieval(root.derive("setup"));
    baselines::SnoreConfig snore;
    snore.levels = 10;
    snore.iterations_per_level = 10;
    snore.sigma_max = 100.0;
    snore.sigma_min = 1.0;
    snore.delta = 0.2;
    constexpr int trials = 100;
    int wins = 0;
    double psnr_ddfire = 0.0, psnr_snore = 0.0;
    const Index d = pr.shape.size();
    for (int t = 0; t < trials; ++t) {
      const RandomStream ts = root.derive("trial").derive(static_cast<std::uint64_t>(t));
      const PhaseRetrievalTrial trial = phase_retrieval_trial(pr, ts);
      fire::FireSettings fs;
      fs.signal_power = pr.signal_power;
      RandomStream rng = ts.derive("solver");
      // x_K ~ N(0, sigma_K^2 I), the chain's initialization, drawn from the same stream
      RandomStream init_rng = rng;
      const Signal x_init = std::sqrt(pr.plan.sigma_k2.back()) * init_rng.normal(d);
      const Signal x_dd = ddim::ddfire_sample(trial.problem, *pr.denoiser, pr.plan, 1.0, fs, rng).x;
      RandomStream snore_rng = ts.derive("snore");
      const Signal x_sn = baselines::snore_sample(trial.problem, *pr.denoiser, snore, snore_rng).x;
      const double res_dd = magnitude_residual(trial.y, trial.op, x_dd);
      const double mse_dd = metrics::mse(x_dd, trial.x0);
      const bool beats_init = res_dd < magnitude_residual(trial.y, trial.op, x_init) &&
                              mse_dd < metrics::mse(x_init, trial.x0);
      const bool beats_snore = res_dd < magnitude_residual(trial.y, trial.op, x_sn) &&
                               mse_dd < metrics::mse(x_sn, trial.x0);
      wins += beats_init && beats_snore;
      psnr_ddfire += metrics::psnr(x_dd, trial.x0, 255.0) / trials;
      psnr_snore += metrics::psnr(x_sn, trial.x0, 255.0) / trials;
    }
    r.passed = wins >= 90;
    r.detail = "DDfire-GLM (" + std::to_string(pr.plan.total()) + " NFEs) beats its init and SNORE (" +
               std::to_string(snore.levels * snore.iterations_per_level) + " NFEs) on residual and MSE in " +
               std::to_string(wins) + "/" + std::to_string(trials) + " trials (>= 90); mean PSNR " +
               fmt(psnr_ddfire, 4) + " vs " + fmt(psnr_snore, 4) + " dB";
  });
}

// --- 10 ---------------------------------------------------------------------

CheckResult criterion_10(std::uint64_t seed) {
  return timed(10, "baseline sanity", 0.0, [&](CheckResult& r) {
    const RandomStream root = RandomStream(seed).derive("criterion-10");
    RandomStream draws = root.derive("draws");
    double dds_err = 0.0;
    const std::vector<LinearOperator> ops{
        LinearOperator::dense(random_dense(6, 10, root.derive("dense"))),
        LinearOperator::circular_convolution({8, 8}, gaussian_kernel(3, 0.7))};
    for (const auto& op : ops) {
      const LinearOperator with = op.with_svd();
      for (const double nu : {0.05, 0.3, 2.0}) {
        const double sigma_y = 0.1;
        const Signal x_bar = draws.normal(op.input_size());
        const Measurement y = draws.normal(op.output_size());
        const Signal a = fire::mmse_update_svd(y, with, x_bar, sigma_y, nu);
        const Signal b = baselines::dds_data_step(op.adjoint(y), op, x_bar, sigma_y * sigma_y / nu,
                                                  static_cast<int>(10 * op.input_size()));
        dds_err = std::max(dds_err, metrics::relative_l2(b, a));
      }
    }

    // noiseless identity problem
    const Index d = 16;
    const priors::IsotropicGaussian prior{Signal::Zero(d), 1.0};
    const priors::DenoiserModel den(prior, d, priors::exact_nu_table(prior, priors::log_spaced(1e-4, 1e3, 30)));
    RandomStream truth = root.derive("truth");
    const Signal x0 = priors::sample(prior, d, truth);
    const double sigma_y = 1e-6;
    const ddim::Problem problem{x0, LinearOperator::dense(Matrix::Identity(d, d)), sigma_y, std::nullopt};
    const auto schedule = ddim::geometric_sigmas(1e-4, 1e2, 10);
    baselines::DdsConfig dds;
    dds.gamma = 1e-12;
    baselines::DiffPirConfig diffpir;
    baselines::SnoreConfig snore;
    RandomStream a = root.derive("dds"), b = root.derive("diffpir"), c = root.derive("snore"),
                 e = root.derive("ddfire");
    fire::FireSettings fs;
    const auto plan = ddim::plan_schedule(20, 0.4, schedule);
    const double err_dds = metrics::relative_l2(baselines::dds_sample(problem, den, dds, schedule, a).x, x0);
    const double err_pir = metrics::relative_l2(baselines::diffpir_sample(problem, den, diffpir, schedule, b).x, x0);
    const double err_snore = metrics::relative_l2(baselines::snore_sample(problem, den, snore, c).x, x0);
    const double err_ddfire = metrics::relative_l2(ddim::ddfire_sample(problem, den, plan, 1.0, fs, e).x, x0);
    const double worst = std::max({err_dds, err_pir, err_snore, err_ddfire});
    r.passed = dds_err <= 1e-8 && worst <= 1e-6;
    r.detail = "DDS step (M_cg = 10 d, gamma = sigma_y^2/nu) vs MMSE solve rel " + fmt(dds_err) +
               " (<= 1e-8); A=I noiseless ||x - y||/||y||: DDS " + fmt(err_dds) + ", DiffPIR " +
               fmt(err_pir) + ", SNORE " + fmt(err_snore) + ", DDfire " + fmt(err_ddfire) + " (<= 1e-6)";
  });
}

// --- driver -----------------------------------------------------------------

std::vector<CheckResult> run_acceptance(std::uint64_t seed, const std::vector<int>& which,
                                        const std::function<void(const CheckResult&)>& report) {
  using Fn = CheckResult (*)(std::uint64_t);
  static const Fn all[] = {criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                           criterion_6, criterion_7, criterion_8, criterion_9, criterion_10};
  std::vector<CheckResult> out;
  for (int id = 1; id <= 10; ++id) {
    if (!which.empty() && std::find(which.begin(), which.end(), id) == which.end()) continue;
    out.push_back(all[id - 1](seed));
    if (report) report(out.back());
  }
  return out;
}

std::string format_result(const CheckResult& r) {
  std::ostringstream o;
  o << (r.passed ? "[PASS] " : "[FAIL] ") << r.id << ' ' << r.name << " (" << fmt(r.seconds, 3)
    << " s): " << r.detail;
  return o.str();
}

// --- module invariants ------------------------------------------------------

std::vector<CheckResult> run_invariants(std::uint64_t seed,
                                        const std::function<void(const CheckResult&)>& report) {
  std::vector<CheckResult> out;
  auto add = [&](CheckResult r) {
    out.push_back(std::move(r));
    if (report) report(out.back());
  };
  const RandomStream root = RandomStream(seed).derive("invariants");

  auto operator_zoo = [&]() {
    RandomStream mask_rng = root.derive("cdp");
    const ImageShape sh{6, 8};
    return std::vector<LinearOperator>{
        LinearOperator::dense(random_dense(7, 11, root.derive("dense"))),
        LinearOperator::mask(sh.size(), {0, 3, 5, 17, 40, 47}),
        LinearOperator::box_inpainting(sh, 1, 2, 3, 4),
        LinearOperator::circular_convolution(sh, gaussian_kernel(3, 1.0)),
        LinearOperator::decimated_convolution(sh, gaussian_kernel(5, 1.2), 2),
        operators::make_osf(sh),
        operators::make_cdp(sh, mask_rng, 3)};
  };

  add(timed(101, "adjointness <Ax,y> = <x,A^T y>", 0.0, [&](CheckResult& r) {
    RandomStream rng = root.derive("adjoint");
    double worst = 0.0;
    for (const auto& op : operator_zoo()) {
      const Signal x = rng.normal(op.input_size());
      const Measurement y = rng.normal(op.output_size());
      const double lhs = op.apply(x).dot(y), rhs = x.dot(op.adjoint(y));
      worst = std::max(worst, std::abs(lhs - rhs) / (x.norm() * y.norm()));
    }
    r.passed = worst <= 1e-12;
    r.detail = "max normalised gap " + fmt(worst) + " over 7 operator kinds";
  }));

  add(timed(102, "closed-form s_max and ||A||_F^2 match dense SVD", 0.0, [&](CheckResult& r) {
    double worst = 0.0;
    for (const auto& op : operator_zoo()) {
      const Eigen::JacobiSVD<Matrix> svd(op.to_dense());
      worst = std::max({worst, rel_err(op.s_max(), svd.singularValues()[0]),
                        rel_err(op.frobenius_sq(), svd.singularValues().squaredNorm())});
    }
    r.passed = worst <= 1e-8;
    r.detail = "max rel error " + fmt(worst);
  }));

  add(timed(103, "OSF and CDP are isometries", 0.0, [&](CheckResult& r) {
    RandomStream rng = root.derive("isometry");
    RandomStream masks = root.derive("cdp-iso");
    double worst = 0.0;
    for (const auto& op : {operators::make_osf({4, 4}), operators::make_cdp({4, 4}, masks, 4)}) {
      const Signal x = rng.normal(16);
      worst = std::max(worst, rel_err(op.apply(x).norm(), x.norm()));
    }
    r.passed = worst <= 1e-10;
    r.detail = "max | ||Ax|| - ||x|| | / ||x|| = " + fmt(worst);
  }));

  add(timed(104, "Frobenius probe estimate unbiased", 0.0, [&](CheckResult& r) {
    const LinearOperator op = LinearOperator::dense(random_dense(9, 13, root.derive("frob")));
    RandomStream rng = root.derive("probes");
    const double est = operators::estimate_frobenius_sq(op, 100000, rng);
    const double err = rel_err(est, op.frobenius_sq());
    r.passed = err < 0.01;
    r.detail = "rel error " + fmt(err) + " at 1e5 probes (< 1%)";
  }));

  add(timed(105, "nu estimate unbiased under the AWGN model", 0.0, [&](CheckResult& r) {
    const LinearOperator op = LinearOperator::dense(random_dense(40, 30, root.derive("nu-op")));
    RandomStream rng = root.derive("nu-draws");
    const double nu0 = 0.3, sy = 0.2;
    double acc = 0.0;
    constexpr int n = 10000;
    for (int t = 0; t < n; ++t) {
      const Signal x_bar = rng.normal(30);
      const Signal x0 = x_bar + std::sqrt(nu0) * rng.normal(30);
      const Measurement y = op.apply(x0) + sy * rng.normal(40);
      acc += fire::estimate_nu(y, op, x_bar, sy, -1e300) / n;
    }
    const double err = rel_err(acc, nu0);
    r.passed = err < 0.02;
    r.detail = "mean estimate " + fmt(acc, 5) + " vs " + fmt(nu0) + " (within 2%)";
  }));

  add(timed(106, "planner rho is minimal", 0.0, [&](CheckResult& r) {
    bool violated_somewhere = false, all_fit = true;
    for (const auto& [n_tot, delta, K] :
         std::vector<std::tuple<int, double, int>>{{25, 0.4, 10}, {50, 0.2, 20}, {100, 0.5, 30}, {40, 0.0, 20}}) {
      const auto sched = ddim::geometric_sigmas(1e-3, 1e3, K);
      const auto plan = ddim::plan_schedule(n_tot, delta, sched);
      all_fit = all_fit && plan.total() <= n_tot;
      int total = 0;
      for (int k = 1; k <= K; ++k)
        total += k <= plan.k_thresh ? 1
                                    : std::max(2, ddim::iterations_for(sched.at(k), plan.sigma_thresh2,
                                                                       0.99 * plan.rho));
      violated_somewhere = violated_somewhere || total > n_tot;
    }
    r.passed = all_fit && violated_somewhere;
    r.detail = std::string("all plans within budget: ") + (all_fit ? "yes" : "no") +
               "; 0.99 rho exceeds the budget on some configuration: " + (violated_somewhere ? "yes" : "no");
  }));

  add(timed(107, "DDIM step keeps the VE marginal", 0.0, [&](CheckResult& r) {
    RandomStream rng = root.derive("ddim");
    const double sk = 2.0, sp = 0.7;
    double worst = 0.0;
    for (const double eta : {0.0, 0.5, 1.0}) {
      double acc = 0.0;
      constexpr int n = 100000;
      const Signal x0 = Signal::Zero(1);
      for (int t = 0; t < n; ++t) {
        const Signal xk = sk * rng.normal(1);
        acc += ddim::ddim_step(xk, x0, sk, sp, eta, rng).squaredNorm() / n;
      }
      worst = std::max(worst, rel_err(acc, sp * sp));
    }
    r.passed = worst < 0.02;
    r.detail = "max rel error of Var{x_(k-1)} vs sigma_(k-1)^2 " + fmt(worst) + " (< 2%)";
  }));

  add(timed(108, "GMM denoiser matches 1-D quadrature", 0.0, [&](CheckResult& r) {
    priors::GaussianMixture g;
    g.weights = {0.3, 0.7};
    g.means = {Signal::Constant(1, -1.0), Signal::Constant(1, 2.0)};
    g.variances = {0.5, 0.2};
    double worst = 0.0;
    for (const double rv : {-3.0, 0.0, 0.7, 4.0})
      for (const double sigma : {0.1, 1.0}) {
        const auto o = scalar_oracle(
            [&](double x) {
              double p = 0.0;
              for (int c = 0; c < 2; ++c)
                p += g.weights[static_cast<size_t>(c)] / std::sqrt(g.variances[static_cast<size_t>(c)]) *
                     std::exp(-0.5 * std::pow(x - g.means[static_cast<size_t>(c)][0], 2) /
                              g.variances[static_cast<size_t>(c)]);
              return std::log(p);
            },
            rv, sigma * sigma, rv - 30.0 * sigma - 8.0, rv + 30.0 * sigma + 8.0);
        const double mean = priors::posterior_mean(g, Signal::Constant(1, rv), sigma)[0];
        worst = std::max(worst, std::abs(mean - o.mean));
      }
    r.passed = worst <= 1e-8;
    r.detail = "max |error| " + fmt(worst);
  }));

  add(timed(109, "harness determinism across worker counts", 0.0, [&](CheckResult& r) {
    const std::string json = R"({
      "seed": )" + std::to_string(seed) + R"(, "trials": 4,
      "signal": {"rows": 4, "cols": 4},
      "prior": {"kind": "gaussian-mixture", "generate": {"components": 3, "block": 4}},
      "nu_table": {"points": 12, "trials": 200},
      "operator": {"kind": "dense", "rows": 8},
      "noise": {"kind": "gaussian", "sigma_y": 0.05},
      "solver": {"kind": "ddfire", "schedule": {"sigma_min2": 1e-3, "sigma_max2": 10, "K": 5},
                 "n_tot": 12, "delta": 0.4, "eta": 1.0}
    })";
    const auto config = harness::parse_config(json);
    const auto setup = harness::build_setup(config);
    const auto one = harness::run_experiment(config, setup, 1);
    const auto two = harness::run_experiment(config, setup, 2);
    std::ostringstream a, b;
    one.record.write_csv(a);
    two.record.write_csv(b);
    bool same = a.str() == b.str();
    for (size_t t = 0; t < one.trials.size(); ++t)
      same = same && one.trials[t].x_hat == two.trials[t].x_hat;
    const auto single = harness::run_trial(config, setup, 2);
    same = same && single.x_hat == one.trials[2].x_hat;
    r.passed = same;
    r.detail = same ? "identical traces and reconstructions for 1 and 2 workers and a lone trial"
                    : "outputs differ";
  }));
  return out;
}

}  // namespace ddfire::verify
