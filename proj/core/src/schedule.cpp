#include "ddfire/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ddfire/errors.hpp"
#include <nlohmann/json.hpp>

namespace ddfire::ddim {

NoiseSchedule geometric_sigmas(double sigma_min2, double sigma_max2, int steps) {
  require(steps >= 1, "geometric_sigmas: K must be >= 1");
  require(sigma_max2 > 0.0, "geometric_sigmas: sigma_max^2 must be positive");
  NoiseSchedule s;
  if (steps == 1) {
    s.sigma2 = {sigma_max2};
    return s;
  }
  require(sigma_min2 > 0.0 && sigma_min2 < sigma_max2,
          "geometric_sigmas: need 0 < sigma_min^2 < sigma_max^2");
  s.sigma2.resize(static_cast<size_t>(steps));
  const double log_ratio = std::log(sigma_max2 / sigma_min2);
  for (int k = 1; k <= steps; ++k)
    s.sigma2[static_cast<size_t>(k - 1)] =
        sigma_min2 * std::exp(log_ratio * (k - 1) / static_cast<double>(steps - 1));
  s.sigma2.front() = sigma_min2;
  s.sigma2.back() = sigma_max2;
  return s;
}

int FirePlan::total() const { return std::accumulate(n_k.begin(), n_k.end(), 0); }

std::vector<double> FirePlan::iteration_variances(int k) const {
  const auto idx = static_cast<size_t>(k - 1);
  std::vector<double> out;
  double v = planning_variance.at(idx);
  for (int n = 0; n < n_k.at(idx); ++n) {
    out.push_back(v);
    v /= rho;
  }
  return out;
}

std::string FirePlan::to_json() const {
  nlohmann::json j;
  j["K"] = steps;
  j["delta"] = delta;
  j["N_tot"] = n_tot;
  j["rho"] = rho;
  j["k_thresh"] = k_thresh;
  j["sigma_thresh2"] = sigma_thresh2;
  j["N_k"] = n_k;
  j["sigma_k2"] = sigma_k2;
  j["slack"] = slack();
  return j.dump(2);
}

double k_min(int n_tot, double delta) { return (n_tot + 1.0 - delta) / (2.0 - delta); }

int iterations_for(double sigma2, double sigma_thresh2, double rho) {
  const double n = std::log(sigma2 / sigma_thresh2) / std::log(rho) + 1.0;
  return static_cast<int>(std::ceil(std::max(1.0, n) - 1e-12));
}

namespace {

FirePlan plan_against(int n_tot, double delta, const NoiseSchedule& schedule,
                      std::vector<double> variance) {
  const int K = schedule.steps();
  require(K >= 1, "plan_schedule: empty schedule");
  require(delta >= 0.0 && delta < 1.0, "plan_schedule: delta must lie in [0, 1)");
  require(n_tot >= 1, "plan_schedule: N_tot must be >= 1");
  const double kmin = k_min(n_tot, delta);
  if (K > kmin) {
    throw ContractViolation("plan_schedule: K = " + std::to_string(K) +
                            " exceeds K_min = (N_tot + 1 - delta)/(2 - delta) = " +
                            std::to_string(kmin) + " for N_tot = " + std::to_string(n_tot) +
                            ", delta = " + std::to_string(delta));
  }

  FirePlan plan;
  plan.n_tot = n_tot;
  plan.steps = K;
  plan.delta = delta;
  plan.k_thresh = 1 + static_cast<int>(std::floor((K - 1) * delta));
  plan.sigma_k2 = schedule.sigma2;
  plan.planning_variance = std::move(variance);
  plan.sigma_thresh2 = plan.planning_variance[static_cast<size_t>(plan.k_thresh - 1)];

  auto counts = [&](double rho) {
    std::vector<int> n(static_cast<size_t>(K), 1);
    for (int k = plan.k_thresh + 1; k <= K; ++k)
      n[static_cast<size_t>(k - 1)] = std::max(
          2, iterations_for(plan.planning_variance[static_cast<size_t>(k - 1)],
                            plan.sigma_thresh2, rho));
    return n;
  };
  auto total = [&](double rho) {
    const auto n = counts(rho);
    return std::accumulate(n.begin(), n.end(), 0);
  };

  if (plan.k_thresh == K) {
    plan.n_k.assign(static_cast<size_t>(K), 1);
    plan.rho = 2.0;
    if (plan.total() > n_tot)
      throw ContractViolation("plan_schedule: N_tot = " + std::to_string(n_tot) +
                              " is below K = " + std::to_string(K));
    return plan;
  }

  double hi = plan.planning_variance.back() / plan.sigma_thresh2 + 1.0;
  int doublings = 0;
  while (total(hi) > n_tot) {
    if (++doublings > 200 || total(hi) == K + (K - plan.k_thresh)) {
      throw ContractViolation(
          "plan_schedule: budget N_tot = " + std::to_string(n_tot) +
          " is infeasible for K = " + std::to_string(K) + ", delta = " + std::to_string(delta) +
          " (needs at least " + std::to_string(2 * K - plan.k_thresh) +
          " NFEs; K_min = " + std::to_string(kmin) + ")");
    }
    hi *= 2.0;
  }
  double lo = 1.0;
  for (int it = 0; it < 200 && (hi - lo) > 1e-6 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (total(mid) <= n_tot ? hi : lo) = mid;
  }
  plan.rho = hi;
  plan.n_k = counts(hi);
  return plan;
}

}  // namespace

FirePlan plan_schedule(int n_tot, double delta, const NoiseSchedule& schedule) {
  return plan_against(n_tot, delta, schedule, schedule.sigma2);
}

FirePlan plan_schedule_guided(int n_tot, double delta, const NoiseSchedule& schedule,
                              double sigma_guide2) {
  require(sigma_guide2 > 0.0, "plan_schedule_guided: sigma_guide^2 must be positive");
  std::vector<double> nu;
  nu.reserve(schedule.sigma2.size());
  for (double s2 : schedule.sigma2) nu.push_back(1.0 / (1.0 / s2 + 1.0 / sigma_guide2));
  return plan_against(n_tot, delta, schedule, std::move(nu));
}

DdimCoefficients ddim_coefficients(double sigma_k, double sigma_prev, double eta) {
  require(sigma_k > 0.0 && sigma_prev >= 0.0, "ddim_step: sigmas must be nonnegative");
  require(sigma_prev <= sigma_k, "ddim_step: requires sigma_{k-1} <= sigma_k");
  require(eta >= 0.0, "ddim_step: eta must be nonnegative");
  const double sk2 = sigma_k * sigma_k, sp2 = sigma_prev * sigma_prev;
  const double vs2 = eta * eta * sp2 * (sk2 - sp2) / sk2;
  if (vs2 > sp2 * (1.0 + 1e-12)) {
    throw ContractViolation("ddim_step: eta = " + std::to_string(eta) +
                            " gives varsigma^2 > sigma_{k-1}^2; need eta <= sigma_k / sqrt(sigma_k^2 - sigma_{k-1}^2)");
  }
  DdimCoefficients c;
  c.varsigma = std::sqrt(vs2);
  c.h = std::sqrt(std::max(sp2 - vs2, 0.0) / sk2);
  return c;
}

Signal ddim_step(const Signal& x_k, const Signal& x_hat, double sigma_k, double sigma_prev,
                 double eta, RandomStream& rng) {
  require(x_k.size() == x_hat.size(), "ddim_step: length mismatch");
  const auto c = ddim_coefficients(sigma_k, sigma_prev, eta);
  Signal out = c.h * x_k + (1.0 - c.h) * x_hat;
  if (c.varsigma > 0.0) out += c.varsigma * rng.normal(x_k.size());
  return out;
}

double vp_to_ve(double alpha_bar) {
  if (alpha_bar == 0.0) throw ContractViolation("vp_to_ve: alpha_bar = 0 gives infinite variance");
  require(alpha_bar > 0.0 && alpha_bar <= 1.0, "vp_to_ve: alpha_bar must lie in (0, 1]");
  return (1.0 - alpha_bar) / alpha_bar;
}

double ve_to_vp(double sigma2) {
  require(sigma2 >= 0.0, "ve_to_vp: sigma^2 must be nonnegative");
  return 1.0 / (1.0 + sigma2);
}

fire::FireResult run_fire(const Problem& problem, const priors::Denoiser& denoiser,
                          const Signal& r, double sigma, int iterations, double rho,
                          const fire::FireSettings& settings, RandomStream& rng) {
  if (problem.channel) {
    return glm::fire_glm(problem.y, problem.op, *problem.channel, denoiser, r, sigma, iterations,
                         rho, settings, rng);
  }
  return fire::fire_slm(problem.y, problem.op, problem.sigma_y, denoiser, r, sigma, iterations,
                        rho, settings, rng);
}

namespace {
void check_plan(const FirePlan& plan) {
  require(plan.steps >= 1 && plan.n_k.size() == static_cast<size_t>(plan.steps) &&
              plan.sigma_k2.size() == plan.n_k.size(),
          "ddfire: malformed plan");
}
}  // namespace

SampleResult ddfire_sample(const Problem& problem, const priors::Denoiser& denoiser,
                           const FirePlan& plan, double eta, const fire::FireSettings& settings,
                           RandomStream& rng) {
  check_plan(plan);
  const int K = plan.steps;
  SampleResult out;
  Signal x = std::sqrt(plan.sigma_k2.back()) * rng.normal(problem.op.input_size());
  fire::FireSettings step_settings = settings;
  for (int k = K; k >= 1; --k) {
    const double sk = std::sqrt(plan.sigma_k2[static_cast<size_t>(k - 1)]);
    const double sp = k > 1 ? std::sqrt(plan.sigma_k2[static_cast<size_t>(k - 2)]) : 0.0;
    step_settings.step = k;
    auto res = run_fire(problem, denoiser, x, sk, plan.n_k[static_cast<size_t>(k - 1)], plan.rho,
                        step_settings, rng);
    out.record.append(res.record);
    if (k == 1) {
      out.x = std::move(res.x);
    } else {
      x = ddim_step(x, res.x, sk, sp, eta, rng);
    }
  }
  return out;
}

std::pair<Signal, double> guided_input(const Signal& x_k, double sigma_k2,
                                       const Signal& noisy_guide, double sigma_guide2) {
  const double denom = sigma_k2 + sigma_guide2;
  Signal r = (sigma_guide2 * x_k + sigma_k2 * noisy_guide) / denom;
  return {std::move(r), 1.0 / (1.0 / sigma_k2 + 1.0 / sigma_guide2)};
}

SampleResult ddfire_guided_sample(const Problem& problem, const priors::Denoiser& denoiser,
                                  const FirePlan& plan, double eta, const GuidanceSpec& guide,
                                  const fire::FireSettings& settings, RandomStream& rng) {
  check_plan(plan);
  require(guide.sigma_guide2 > 0.0, "ddfire_guided_sample: sigma_guide^2 must be positive");
  require(guide.x_guide.size() == problem.op.input_size(),
          "ddfire_guided_sample: guide length does not match the operator");
  const int K = plan.steps;
  const Index d = problem.op.input_size();
  const double sg = std::sqrt(guide.sigma_guide2);
  SampleResult out;
  Signal x = std::sqrt(plan.sigma_k2.back()) * rng.normal(d);
  fire::FireSettings step_settings = settings;
  for (int k = K; k >= 1; --k) {
    const double sk2 = plan.sigma_k2[static_cast<size_t>(k - 1)];
    const double sp = k > 1 ? std::sqrt(plan.sigma_k2[static_cast<size_t>(k - 2)]) : 0.0;
    const Signal noisy_guide = guide.x_guide + sg * rng.normal(d);
    auto [r, nu_k] = guided_input(x, sk2, noisy_guide, guide.sigma_guide2);
    step_settings.step = k;
    auto res = run_fire(problem, denoiser, r, std::sqrt(nu_k),
                        plan.n_k[static_cast<size_t>(k - 1)], plan.rho, step_settings, rng);
    out.record.append(res.record);
    if (k == 1) {
      out.x = std::move(res.x);
    } else {
      x = ddim_step(x, res.x, std::sqrt(sk2), sp, eta, rng);
    }
  }
  return out;
}

}  // namespace ddfire::ddim
