#include "ddfire/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <thread>

#include "ddfire/errors.hpp"
#include "ddfire/metrics.hpp"
#include <nlohmann/json.hpp>

namespace ddfire::harness {

using nlohmann::json;
using operators::LinearOperator;

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ConfigError("empty matrix");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw ConfigError("ragged matrix rows");
    for (size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return m;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

priors::PriorSpec build_prior(const PriorConfig& config, Index d) {
  if (config.kind == "isotropic-gaussian") {
    priors::IsotropicGaussian iso;
    if (config.mean.size() == 1) {
      iso.mean = Signal::Constant(d, config.mean.front());
    } else if (static_cast<Index>(config.mean.size()) == d) {
      iso.mean = Eigen::Map<const Vector>(config.mean.data(), d);
    } else {
      throw ConfigError("prior.mean must have 1 or d entries");
    }
    iso.variance = config.variance;
    return iso;
  }
  priors::GaussianMixture gmm = config.mixture;
  if (config.generated) {
    const auto& g = *config.generated;
    RandomStream rng(g.seed);
    gmm = {};
    for (int c = 0; c < g.components; ++c) {
      gmm.weights.push_back(1.0 / g.components);
      gmm.means.push_back(Vector::Constant(g.block, g.mean_offset) + g.mean_spread * rng.normal(g.block));
      gmm.variances.push_back(g.variance);
    }
  }
  try {
    priors::validate(gmm, d);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("prior: ") + e.what());
  }
  return gmm;
}

LinearOperator build_operator(const OperatorConfig& o, ImageShape shape, RandomStream& rng) {
  const Index d = shape.size();
  auto kernel = [&]() {
    if (!o.kernel_csv.empty()) return to_matrix(read_csv_matrix(o.kernel_csv));
    if (o.kernel.empty()) throw ConfigError("operator." + o.kind + " needs 'kernel' or 'kernel_csv'");
    return to_matrix(o.kernel);
  };
  LinearOperator op;
  try {
    if (o.kind == "dense") {
      if (!o.matrix.empty()) {
        op = LinearOperator::dense(to_matrix(o.matrix));
        if (op.input_size() != d) throw ConfigError("operator.matrix column count must equal d");
      } else {
        const Index m = o.rows > 0 ? o.rows : d;
        RandomStream g(o.seed);
        Matrix A(m, d);
        for (Index j = 0; j < d; ++j)
          for (Index i = 0; i < m; ++i) A(i, j) = g.normal() / std::sqrt(static_cast<double>(m));
        op = LinearOperator::dense(std::move(A));
      }
    } else if (o.kind == "mask") {
      op = LinearOperator::mask(d, o.keep);
    } else if (o.kind == "box-inpainting") {
      op = LinearOperator::box_inpainting(shape, o.box_row0, o.box_col0, o.box_height, o.box_width);
    } else if (o.kind == "circular-convolution") {
      op = LinearOperator::circular_convolution(shape, kernel());
    } else if (o.kind == "decimated-convolution") {
      op = LinearOperator::decimated_convolution(shape, kernel(), o.factor);
    } else if (o.kind == "oversampled-fourier") {
      op = operators::make_osf(shape);
    } else if (o.kind == "coded-diffraction") {
      if (!o.masks_csv.empty()) {
        const auto rows = read_csv_matrix(o.masks_csv);
        std::vector<ComplexVector> masks;
        for (const auto& row : rows) {
          if (static_cast<Index>(row.size()) != d) throw ConfigError("masks_csv rows must hold d phases");
          ComplexVector c(d);
          for (Index i = 0; i < d; ++i) c[i] = std::polar(1.0, row[static_cast<size_t>(i)]);
          masks.push_back(std::move(c));
        }
        op = LinearOperator::coded_diffraction(shape, std::move(masks));
      } else {
        RandomStream g(o.seed);
        op = operators::make_cdp(shape, g, o.masks);
      }
    }
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("operator: ") + e.what());
  }
  if (o.svd) op = op.with_svd();
  if (o.frobenius == "probe") {
    RandomStream probe = rng.derive("frobenius");
    op = op.with_frobenius_sq(operators::estimate_frobenius_sq(op, o.probes, probe));
  }
  return op;
}

RandomStream trial_stream(std::uint64_t seed, int trial, std::string_view tag) {
  return RandomStream(seed).derive("trial").derive(static_cast<std::uint64_t>(trial)).derive(tag);
}

Setup build_setup(const ExperimentConfig& config) {
  const Index d = config.shape.size();
  RandomStream root(config.seed);
  Setup s;
  s.prior = build_prior(config.prior, d);
  s.signal_power = priors::second_moment(s.prior);
  RandomStream op_rng = root.derive("operator");
  s.op = build_operator(config.op, config.shape, op_rng);

  const auto& sc = config.solver.schedule;
  try {
    s.schedule = ddim::geometric_sigmas(sc.sigma_min2, sc.sigma_max2, sc.steps);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("solver.schedule: ") + e.what());
  }

  const auto& nt = config.nu_table;
  double lo, hi;
  if (config.solver.kind == "fire-only") {
    lo = nt.sigma_min.value_or(1e-3 * config.solver.fire_sigma_init);
    hi = nt.sigma_max.value_or(config.solver.fire_sigma_init);
  } else {
    lo = nt.sigma_min.value_or(0.1 * std::sqrt(sc.sigma_min2));
    hi = nt.sigma_max.value_or(std::sqrt(sc.sigma_max2));
  }
  if (!(lo > 0.0 && hi > lo)) throw ConfigError("nu_table: need 0 < sigma_min < sigma_max");
  const auto grid = priors::log_spaced(lo, hi, nt.points);
  priors::NuTable table;
  if (const auto* iso = std::get_if<priors::IsotropicGaussian>(&s.prior);
      iso && nt.exact_if_available) {
    table = priors::exact_nu_table(*iso, grid);
  } else {
    RandomStream table_rng = root.derive("nu-table");
    table = priors::build_nu_table(s.prior, d, grid, nt.trials, table_rng);
  }
  s.denoiser = std::make_shared<priors::DenoiserModel>(s.prior, d, std::move(table));

  const auto& n = config.noise;
  if (n.kind == "gaussian") {
    s.sigma_y = n.sigma_y;
  } else if (n.kind == "shot") {
    const double sy = n.magnitude_sigma_y.value_or(
        n.alpha_shot > 0.0 ? glm::shot_noise_sigma_y(n.alpha_shot) : n.sigma_y);
    if (!(sy > 0.0)) throw ConfigError("noise: magnitude channel needs a positive sigma_y");
    s.sigma_y = sy;
    s.channel = glm::MeasurementChannel::magnitude(sy, n.method);
  } else {
    if (s.op.is_complex()) throw ConfigError("dequantization noise needs a real-valued operator");
    if (!(n.sigma_y > 0.0)) throw ConfigError("dequantization noise needs sigma_y > 0");
    s.sigma_y = n.sigma_y;
    try {
      s.channel = glm::MeasurementChannel::dequantization(n.edges, n.sigma_y);
    } catch (const ContractViolation& e) {
      throw ConfigError(std::string("noise: ") + e.what());
    }
  }

  if (config.solver.kind == "ddfire") {
    try {
      if (config.solver.guide) {
        s.plan = ddim::plan_schedule_guided(config.solver.n_tot, config.solver.delta, s.schedule,
                                            config.solver.guide->factor *
                                                config.solver.guide->error_variance);
      } else {
        s.plan = ddim::plan_schedule(config.solver.n_tot, config.solver.delta, s.schedule);
      }
    } catch (const ContractViolation& e) {
      throw ConfigError(std::string("solver: ") + e.what());
    }
  }
  return s;
}

namespace {

Measurement measure(const ExperimentConfig& config, const Setup& s, const Signal& x0,
                    RandomStream& rng) {
  const Measurement z = s.op.apply(x0);
  const auto& n = config.noise;
  if (n.kind == "gaussian") return z + n.sigma_y * rng.normal(z.size());
  if (n.kind == "shot") return glm::shot_noise_measure(z, n.alpha_shot, s.op.is_complex(), rng);
  Measurement y(z.size());
  for (Index j = 0; j < z.size(); ++j) {
    const double t = z[j] + n.sigma_y * rng.normal();
    y[j] = static_cast<double>(std::upper_bound(n.edges.begin(), n.edges.end(), t) - n.edges.begin());
  }
  return y;
}

double residual(const ExperimentConfig& config, const Setup& s, const Measurement& y,
                const Signal& x) {
  const Measurement z = s.op.apply(x);
  if (config.noise.kind == "shot") return (y - glm::magnitudes(z, s.op.is_complex())).norm();
  if (config.noise.kind == "dequantization") return std::nan("");
  return (y - z).norm();
}

}  // namespace

TrialOutcome run_trial(const ExperimentConfig& config, const Setup& s, int trial) {
  const auto t0 = std::chrono::steady_clock::now();
  TrialOutcome out;
  out.trial = trial;
  const Index d = config.shape.size();
  RandomStream truth_rng = trial_stream(config.seed, trial, "truth");
  RandomStream meas_rng = trial_stream(config.seed, trial, "measurement");
  RandomStream solver_rng = trial_stream(config.seed, trial, "solver");
  try {
    out.x0 = priors::sample(s.prior, d, truth_rng);
    ddim::Problem problem{measure(config, s, out.x0, meas_rng), s.op, s.sigma_y, s.channel};
    const auto& sol = config.solver;
    fire::FireSettings fs = sol.fire;
    fs.truth = out.x0;
    fs.signal_power = s.signal_power;
    if (sol.kind == "fire-only") {
      fs.solver_name = "fire";
      const Signal r_init = out.x0 + sol.fire_sigma_init * solver_rng.normal(d);
      auto res = ddim::run_fire(problem, *s.denoiser, r_init, sol.fire_sigma_init,
                                sol.fire_iterations, sol.fire_rho, fs, solver_rng);
      out.x_hat = std::move(res.x);
      out.record = std::move(res.record);
    } else if (sol.kind == "ddfire") {
      fs.solver_name = "ddfire";
      ddim::SampleResult res;
      if (sol.guide) {
        ddim::GuidanceSpec guide;
        guide.x_guide = out.x0 + std::sqrt(sol.guide->error_variance) * truth_rng.normal(d);
        guide.sigma_guide2 = sol.guide->factor * sol.guide->error_variance;
        res = ddim::ddfire_guided_sample(problem, *s.denoiser, *s.plan, sol.eta, guide, fs,
                                         solver_rng);
      } else {
        res = ddim::ddfire_sample(problem, *s.denoiser, *s.plan, sol.eta, fs, solver_rng);
      }
      out.x_hat = std::move(res.x);
      out.record = std::move(res.record);
    } else if (sol.kind == "dds") {
      auto res = baselines::dds_sample(problem, *s.denoiser, sol.dds, s.schedule, solver_rng, out.x0);
      out.x_hat = std::move(res.x);
      out.record = std::move(res.record);
    } else if (sol.kind == "diffpir") {
      auto res = baselines::diffpir_sample(problem, *s.denoiser, sol.diffpir, s.schedule,
                                           solver_rng, out.x0);
      out.x_hat = std::move(res.x);
      out.record = std::move(res.record);
    } else {
      auto res = baselines::snore_sample(problem, *s.denoiser, sol.snore, solver_rng, out.x0);
      out.x_hat = std::move(res.x);
      out.record = std::move(res.record);
    }
    out.mse = metrics::mse(out.x_hat, out.x0);
    out.psnr = metrics::psnr(out.x_hat, out.x0, config.peak);
    out.residual = residual(config, s, problem.y, out.x_hat);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.record.set_trial(trial);
  out.seconds = seconds_since(t0);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Setup& setup, int workers) {
  require(workers >= 1, "run_experiment: workers must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.trials.resize(static_cast<size_t>(config.trials));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&]() {
    for (int t = next++; t < config.trials; t = next++) {
      try {
        result.trials[static_cast<size_t>(t)] = run_trial(config, setup, t);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n_threads = std::min(workers, std::max(config.trials, 1));
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  for (const auto& t : result.trials) result.record.append(t.record);
  result.seconds = seconds_since(t0);

  json manifest;
  manifest["ddfire_version"] = "0.1.0";
  manifest["config"] = json::parse(config.source_json.empty() ? "{}" : config.source_json);
  manifest["seed"] = config.seed;
  manifest["workers"] = workers;
  manifest["wall_seconds"] = result.seconds;
  json trials = json::array();
  double mse_sum = 0.0;
  int ok = 0;
  for (const auto& t : result.trials) {
    json tj;
    tj["trial"] = t.trial;
    tj["seconds"] = t.seconds;
    if (t.error.empty()) {
      tj["mse"] = t.mse;
      tj["psnr"] = std::isinf(t.psnr) ? json("inf") : json(t.psnr);
      tj["residual"] = std::isnan(t.residual) ? json(nullptr) : json(t.residual);
      mse_sum += t.mse;
      ++ok;
    } else {
      tj["error"] = t.error;
    }
    trials.push_back(tj);
  }
  manifest["trials"] = trials;
  manifest["completed"] = ok;
  manifest["failed"] = config.trials - ok;
  manifest["mean_mse"] = ok > 0 ? json(mse_sum / ok) : json(nullptr);
  if (ok > 0 && mse_sum > 0.0)
    manifest["mean_psnr_of_mean_mse"] = 10.0 * std::log10(config.peak * config.peak / (mse_sum / ok));
  if (setup.plan) manifest["plan"] = json::parse(setup.plan->to_json());
  result.manifest_json = manifest.dump(2);
  return result;
}

std::vector<GridPoint> grid_search(const ExperimentConfig& config, const Setup& setup,
                                   const std::vector<int>& steps,
                                   const std::vector<double>& deltas, int workers) {
  if (config.solver.kind != "ddfire") throw ConfigError("grid search needs solver.kind = ddfire");
  if (config.solver.guide) throw ConfigError("grid search does not support guided ddfire");
  std::vector<GridPoint> grid;
  for (const int k : steps) {
    for (const double delta : deltas) {
      GridPoint g;
      g.steps = k;
      g.delta = delta;
      ExperimentConfig c = config;
      c.solver.schedule.steps = k;
      c.solver.delta = delta;
      Setup s = setup;
      try {
        s.schedule = ddim::geometric_sigmas(c.solver.schedule.sigma_min2, c.solver.schedule.sigma_max2, k);
        s.plan = ddim::plan_schedule(c.solver.n_tot, delta, s.schedule);
      } catch (const ContractViolation&) {
        grid.push_back(g);
        continue;
      }
      g.feasible = true;
      const auto result = run_experiment(c, s, workers);
      int ok = 0;
      for (const auto& t : result.trials) {
        if (!t.error.empty()) {
          ++g.failed_trials;
          continue;
        }
        g.mean_mse += t.mse;
        g.mean_psnr += t.psnr;
        ++ok;
      }
      if (ok > 0) {
        g.mean_mse /= ok;
        g.mean_psnr /= ok;
      } else {
        g.mean_mse = g.mean_psnr = std::numeric_limits<double>::quiet_NaN();
      }
      grid.push_back(g);
    }
  }
  return grid;
}

void write_grid_csv(const std::vector<GridPoint>& grid, std::ostream& out) {
  out << "K,delta,feasible,mean_mse,mean_psnr,failed_trials\n";
  out.precision(10);
  for (const auto& g : grid) {
    out << g.steps << ',' << g.delta << ',' << (g.feasible ? 1 : 0) << ',';
    if (g.feasible) out << g.mean_mse << ',' << g.mean_psnr;
    else out << ',';
    out << ',' << g.failed_trials << '\n';
  }
}

void write_f32_blob(const std::string& path, const std::vector<Signal>& signals, ImageShape shape) {
  static_assert(std::endian::native == std::endian::little, "float32 blobs assume a little-endian host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& s : signals) {
    for (Index i = 0; i < s.size(); ++i) {
      const float v = static_cast<float>(s[i]);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  json side;
  side["dtype"] = "float32";
  side["endianness"] = "little";
  side["shape"] = {static_cast<int>(signals.size()), shape.rows, shape.cols};
  std::ofstream(path + ".json") << side.dump(2) << '\n';
}

void write_artifacts(const ExperimentConfig& config, const Setup& setup,
                     const ExperimentResult& result, const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  {
    std::ofstream trace(fs::path(directory) / "trace.csv");
    result.record.write_csv(trace);
  }
  std::ofstream(fs::path(directory) / "summary.json") << result.manifest_json << '\n';
  std::vector<Signal> recon, truth;
  for (const auto& t : result.trials) {
    if (!t.error.empty()) continue;
    recon.push_back(t.x_hat);
    truth.push_back(t.x0);
  }
  write_f32_blob((fs::path(directory) / "reconstructions.f32").string(), recon, config.shape);
  write_f32_blob((fs::path(directory) / "ground_truth.f32").string(), truth, config.shape);
  if (setup.plan) std::ofstream(fs::path(directory) / "plan.json") << setup.plan->to_json() << '\n';
  std::ofstream nu(fs::path(directory) / "nu_table.csv");
  setup.denoiser->nu_table().write_csv(nu);
}

}  // namespace ddfire::harness
