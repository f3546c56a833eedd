#include "ddfire/baselines.hpp"

#include <cmath>

#include "ddfire/cg.hpp"
#include "ddfire/errors.hpp"

namespace ddfire::baselines {

using operators::LinearOperator;

Signal tikhonov_solve(const Measurement& y, const LinearOperator& op, const Signal& x_bar,
                      double weight) {
  require(weight > 0.0, "tikhonov_solve: weight must be positive");
  if (op.has_svd()) return fire::mmse_update_svd(y, op, x_bar, 1.0, 1.0 / weight);
  const Vector b = op.adjoint(y) + weight * x_bar;
  auto normal = [&](const Vector& v) -> Vector { return op.normal(v) + weight * v; };
  return conjugate_gradient(normal, b, x_bar, 1e-12, 10 * static_cast<int>(op.input_size()) + 100).x;
}

Signal dds_data_step(const Vector& aty, const LinearOperator& op, const Signal& x_bar,
                     double gamma, int cg_iterations, int* iterations) {
  auto normal = [&](const Vector& v) -> Vector { return op.normal(v) + gamma * v; };
  // tol ~ machine precision: exactly M_cg iterations unless already converged
  const auto cg = conjugate_gradient(normal, aty + gamma * x_bar, x_bar, 1e-15, cg_iterations);
  if (iterations) *iterations = cg.iterations;
  return cg.x;
}

namespace {

RunRow make_row(const char* solver, int step, int iter, const Measurement& y,
                const LinearOperator& op, const Signal& x, const std::optional<Signal>& truth,
                bool magnitude) {
  RunRow row;
  row.solver = solver;
  row.step = step;
  row.iter = iter;
  const Measurement z = op.apply(x);
  if (magnitude) {
    Measurement mag(y.size());
    if (op.is_complex()) {
      for (Index j = 0; j < y.size(); ++j) mag[j] = std::hypot(z[2 * j], z[2 * j + 1]);
    } else {
      mag = z.cwiseAbs();
    }
    row.resid_sq = (y - mag).squaredNorm();
  } else {
    row.resid_sq = (y - z).squaredNorm();
  }
  if (truth) row.mse = (x - *truth).squaredNorm() / static_cast<double>(x.size());
  return row;
}

void require_linear(const ddim::Problem& problem, const char* who) {
  if (problem.channel && problem.channel->kind() != glm::ChannelKind::kGaussian)
    throw ContractViolation(std::string(who) + " supports only the linear Gaussian model");
}

double problem_sigma_y(const ddim::Problem& problem) {
  return problem.channel ? problem.channel->sigma_y() : problem.sigma_y;
}

}  // namespace

BaselineOutput dds_sample(const ddim::Problem& problem, const priors::Denoiser& denoiser,
                          const DdsConfig& config, const ddim::NoiseSchedule& schedule,
                          RandomStream& rng, const std::optional<Signal>& truth) {
  require_linear(problem, "dds");
  require(config.gamma > 0.0 && config.cg_iterations >= 1 && config.eta >= 0.0,
          "dds: gamma, M_cg and eta must be positive");
  const auto& op = problem.op;
  const int K = schedule.steps();
  BaselineOutput out;
  Signal x = std::sqrt(schedule.at(K)) * rng.normal(op.input_size());
  const Vector aty = op.adjoint(problem.y);
  for (int k = K; k >= 1; --k) {
    const double sk = std::sqrt(schedule.at(k));
    const Signal x_bar = denoiser.denoise(x, sk, rng);
    int iters = 0;
    const Signal x_hat = dds_data_step(aty, op, x_bar, config.gamma, config.cg_iterations, &iters);
    RunRow row = make_row("dds", k, 1, problem.y, op, x_hat, truth, false);
    row.sigma2 = schedule.at(k);
    row.cg_iters = iters;
    out.record.rows.push_back(row);
    if (k == 1) {
      out.x = x_hat;
    } else {
      x = ddim::ddim_step(x, x_hat, sk, std::sqrt(schedule.at(k - 1)), config.eta, rng);
    }
  }
  return out;
}

BaselineOutput diffpir_sample(const ddim::Problem& problem, const priors::Denoiser& denoiser,
                              const DiffPirConfig& config, const ddim::NoiseSchedule& schedule,
                              RandomStream& rng, const std::optional<Signal>& truth) {
  require_linear(problem, "diffpir");
  require(config.lambda > 0.0, "diffpir: lambda must be positive");
  require(config.eta >= 0.0 && config.eta <= 1.0, "diffpir: eta must lie in [0, 1]");
  const auto& op = problem.op;
  const double sy = fire::clamp_sigma_y(problem_sigma_y(problem), 1.0);
  const int K = schedule.steps();
  BaselineOutput out;
  Signal x = std::sqrt(schedule.at(K)) * rng.normal(op.input_size());
  for (int k = K; k >= 1; --k) {
    const double sk = std::sqrt(schedule.at(k));
    const double sp = std::sqrt(schedule.at(k - 1));
    const Signal x_bar = denoiser.denoise(x, sk, rng);
    const Signal x_hat =
        tikhonov_solve(problem.y, op, x_bar, sy * sy * config.lambda / schedule.at(k));
    RunRow row = make_row("diffpir", k, 1, problem.y, op, x_hat, truth, false);
    row.sigma2 = schedule.at(k);
    out.record.rows.push_back(row);
    if (k == 1) {
      out.x = x_hat;
    } else {
      const double varrho = std::sqrt(1.0 - config.eta) * sp / sk;
      x = varrho * x + (1.0 - varrho) * x_hat;
      if (config.eta > 0.0) x += std::sqrt(config.eta) * sp * rng.normal(x.size());
    }
  }
  return out;
}

std::vector<double> snore_sigmas(const SnoreConfig& config) {
  require(config.levels >= 1, "snore: need at least one annealing level");
  require(config.sigma_max > 0.0 && config.sigma_min > 0.0 && config.sigma_min <= config.sigma_max,
          "snore: need 0 < sigma_min <= sigma_max");
  std::vector<double> out(static_cast<size_t>(config.levels));
  for (int i = 0; i < config.levels; ++i) {
    const double t = config.levels == 1 ? 0.0 : static_cast<double>(i) / (config.levels - 1);
    out[static_cast<size_t>(i)] =
        config.sigma_max * std::pow(config.sigma_min / config.sigma_max, t);
  }
  return out;
}

BaselineOutput snore_sample(const ddim::Problem& problem, const priors::Denoiser& denoiser,
                            const SnoreConfig& config, RandomStream& rng,
                            const std::optional<Signal>& truth) {
  require(config.delta > 0.0, "snore: delta must be positive");
  require(config.iterations_per_level >= 1, "snore: K_i must be >= 1");
  require(config.mm_rounds >= 1, "snore: mm_rounds must be >= 1");
  const auto& op = problem.op;
  const bool magnitude =
      problem.channel && problem.channel->kind() == glm::ChannelKind::kMagnitude;
  if (problem.channel && !magnitude && problem.channel->kind() != glm::ChannelKind::kGaussian)
    throw ContractViolation("snore supports the Gaussian and magnitude channels only");
  const double sy = fire::clamp_sigma_y(problem_sigma_y(problem), 1.0);
  const double weight = sy * sy / config.delta;

  Signal x_hat;
  if (config.init) {
    require(config.init->size() == op.input_size(), "snore: init length does not match");
    x_hat = *config.init;
  } else if (magnitude && op.is_complex()) {
    Measurement z = Measurement::Zero(op.output_size());
    for (Index j = 0; j < problem.y.size(); ++j) z[2 * j] = problem.y[j];
    x_hat = op.adjoint(z);
  } else {
    x_hat = op.adjoint(problem.y);
  }

  // Proximal data step; for |.| measurements, majorize-minimize with the
  // current phase of A x.
  auto prox = [&](const Signal& x_bar) -> Signal {
    if (!magnitude) return tikhonov_solve(problem.y, op, x_bar, weight);
    Signal x = x_bar;
    for (int round = 0; round < config.mm_rounds; ++round) {
      const Measurement z = op.apply(x);
      Measurement target(z.size());
      if (op.is_complex()) {
        for (Index j = 0; j < problem.y.size(); ++j) {
          const double a = std::hypot(z[2 * j], z[2 * j + 1]);
          const double c = a > 0.0 ? z[2 * j] / a : 1.0;
          const double s = a > 0.0 ? z[2 * j + 1] / a : 0.0;
          target[2 * j] = problem.y[j] * c;
          target[2 * j + 1] = problem.y[j] * s;
        }
      } else {
        for (Index j = 0; j < z.size(); ++j) target[j] = problem.y[j] * (z[j] < 0.0 ? -1.0 : 1.0);
      }
      x = tikhonov_solve(target, op, x_bar, weight);
    }
    return x;
  };

  const auto sigmas = snore_sigmas(config);
  BaselineOutput out;
  int step = static_cast<int>(sigmas.size());
  for (double si : sigmas) {
    const double coeff = config.delta * config.alpha_scale * si * si / (si * si);
    if (coeff < 0.0 || coeff > 1.0)
      throw ConfigError("snore: delta * alpha_i / sigma_i^2 = " + std::to_string(coeff) +
                        " lies outside [0, 1]");
    for (int k = config.iterations_per_level; k >= 1; --k) {
      const Signal r = x_hat + si * rng.normal(x_hat.size());
      const Signal x_bar = (1.0 - coeff) * x_hat + coeff * denoiser.denoise(r, si, rng);
      x_hat = prox(x_bar);
      RunRow row = make_row("snore", step, config.iterations_per_level - k + 1, problem.y, op,
                            x_hat, truth, magnitude);
      row.sigma2 = si * si;
      if (truth) row.true_sigma2 = (r - *truth).squaredNorm() / static_cast<double>(r.size());
      out.record.rows.push_back(row);
    }
    --step;
  }
  out.x = std::move(x_hat);
  return out;
}

}  // namespace ddfire::baselines
