#include "ddfire/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ddfire/errors.hpp"
#include <nlohmann/json.hpp>

namespace ddfire::harness {

using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

std::vector<std::vector<double>> matrix_from(const json& j) {
  std::vector<std::vector<double>> out;
  if (j.is_number()) return {{j.get<double>()}};
  for (const auto& row : j) {
    if (row.is_number()) {
      out.push_back({row.get<double>()});
    } else {
      out.push_back(row.get<std::vector<double>>());
    }
  }
  return out;
}

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

PriorConfig parse_prior(const json& j) {
  check_keys(j, "prior", {"kind", "mean", "variance", "components", "generate"});
  PriorConfig p;
  p.kind = get_or<std::string>(j, "kind", p.kind);
  if (p.kind == "isotropic-gaussian") {
    if (j.contains("mean")) {
      p.mean = j.at("mean").is_number() ? std::vector<double>{j.at("mean").get<double>()}
                                        : j.at("mean").get<std::vector<double>>();
    }
    p.variance = get_or(j, "variance", p.variance);
    if (!(p.variance > 0.0)) throw ConfigError("prior.variance must be positive");
  } else if (p.kind == "gaussian-mixture") {
    if (j.contains("generate")) {
      const auto& g = j.at("generate");
      check_keys(g, "prior.generate", {"components", "block", "mean_spread", "mean_offset", "variance", "seed"});
      GeneratedMixture gm;
      gm.components = get_or(g, "components", gm.components);
      gm.block = get_or<Index>(g, "block", gm.block);
      gm.mean_spread = get_or(g, "mean_spread", gm.mean_spread);
      gm.mean_offset = get_or(g, "mean_offset", gm.mean_offset);
      gm.variance = get_or(g, "variance", gm.variance);
      gm.seed = get_or<std::uint64_t>(g, "seed", gm.seed);
      if (gm.components < 1 || gm.block < 1 || !(gm.variance > 0.0))
        throw ConfigError("prior.generate: components, block and variance must be positive");
      p.generated = gm;
    } else {
      if (!j.contains("components")) throw ConfigError("gaussian-mixture prior needs 'components' or 'generate'");
      for (const auto& c : j.at("components")) {
        check_keys(c, "prior.components[]", {"weight", "mean", "variance"});
        p.mixture.weights.push_back(c.at("weight").get<double>());
        const auto m = c.at("mean").get<std::vector<double>>();
        p.mixture.means.push_back(Eigen::Map<const Vector>(m.data(), static_cast<Index>(m.size())));
        p.mixture.variances.push_back(c.at("variance").get<double>());
      }
    }
  } else {
    throw ConfigError("prior.kind must be isotropic-gaussian or gaussian-mixture, got '" + p.kind + "'");
  }
  return p;
}

OperatorConfig parse_operator(const json& j) {
  check_keys(j, "operator",
             {"kind", "rows", "matrix", "random", "seed", "keep", "row0", "col0", "height", "width",
              "kernel", "kernel_csv", "factor", "masks", "masks_csv", "svd", "frobenius", "probes"});
  OperatorConfig o;
  o.kind = get_or<std::string>(j, "kind", o.kind);
  o.rows = get_or<Index>(j, "rows", o.rows);
  if (j.contains("matrix")) {
    o.matrix = matrix_from(j.at("matrix"));
    o.random = false;
  }
  o.random = get_or(j, "random", o.random);
  o.seed = get_or<std::uint64_t>(j, "seed", o.seed);
  o.keep = get_or<std::vector<Index>>(j, "keep", o.keep);
  o.box_row0 = get_or<Index>(j, "row0", o.box_row0);
  o.box_col0 = get_or<Index>(j, "col0", o.box_col0);
  o.box_height = get_or<Index>(j, "height", o.box_height);
  o.box_width = get_or<Index>(j, "width", o.box_width);
  if (j.contains("kernel")) o.kernel = matrix_from(j.at("kernel"));
  o.kernel_csv = get_or<std::string>(j, "kernel_csv", o.kernel_csv);
  o.factor = get_or<Index>(j, "factor", o.factor);
  o.masks = get_or(j, "masks", o.masks);
  o.masks_csv = get_or<std::string>(j, "masks_csv", o.masks_csv);
  o.svd = get_or(j, "svd", o.svd);
  o.frobenius = get_or<std::string>(j, "frobenius", o.frobenius);
  o.probes = get_or(j, "probes", o.probes);
  static const char* kinds[] = {"dense", "mask", "box-inpainting", "circular-convolution",
                                "decimated-convolution", "oversampled-fourier",
                                "coded-diffraction"};
  bool known = false;
  for (const char* k : kinds) known = known || o.kind == k;
  if (!known) throw ConfigError("operator.kind '" + o.kind + "' is not supported");
  if (o.frobenius != "exact" && o.frobenius != "probe")
    throw ConfigError("operator.frobenius must be 'exact' or 'probe'");
  if (o.probes < 1) throw ConfigError("operator.probes must be >= 1");
  return o;
}

NoiseConfig parse_noise(const json& j) {
  check_keys(j, "noise", {"kind", "sigma_y", "alpha_shot", "magnitude_sigma_y", "method", "edges"});
  NoiseConfig n;
  n.kind = get_or<std::string>(j, "kind", n.kind);
  n.sigma_y = get_or(j, "sigma_y", n.sigma_y);
  n.alpha_shot = get_or(j, "alpha_shot", n.alpha_shot);
  if (j.contains("magnitude_sigma_y")) n.magnitude_sigma_y = j.at("magnitude_sigma_y").get<double>();
  const auto method = get_or<std::string>(j, "method", "laplace");
  if (method == "laplace") {
    n.method = glm::MagnitudeMethod::kLaplace;
  } else if (method == "quadrature") {
    n.method = glm::MagnitudeMethod::kQuadrature;
  } else {
    throw ConfigError("noise.method must be 'laplace' or 'quadrature'");
  }
  n.edges = get_or<std::vector<double>>(j, "edges", n.edges);
  if (n.kind != "gaussian" && n.kind != "shot" && n.kind != "dequantization")
    throw ConfigError("noise.kind must be gaussian, shot or dequantization");
  if (n.sigma_y < 0.0 || n.alpha_shot < 0.0) throw ConfigError("noise levels must be nonnegative");
  if (n.kind == "dequantization" && n.edges.empty())
    throw ConfigError("dequantization noise needs bin 'edges'");
  return n;
}

fire::FireSettings parse_fire(const json& j) {
  check_keys(j, "solver.fire",
             {"solver", "cg_tol", "cg_max_iter", "speedup", "condition_cap",
              "stochastic_denoising", "nu_mode", "glm_nu_factor"});
  fire::FireSettings f;
  const auto solver = get_or<std::string>(j, "solver", "auto");
  if (solver == "auto") {
    f.solver = fire::LinearSolver::kAuto;
  } else if (solver == "svd") {
    f.solver = fire::LinearSolver::kSvd;
  } else if (solver == "cg") {
    f.solver = fire::LinearSolver::kCg;
  } else {
    throw ConfigError("solver.fire.solver must be auto, svd or cg");
  }
  f.cg.tolerance = get_or(j, "cg_tol", f.cg.tolerance);
  f.cg.max_iterations = get_or(j, "cg_max_iter", f.cg.max_iterations);
  f.cg.speedup = get_or(j, "speedup", f.cg.speedup);
  f.cg.condition_cap = get_or(j, "condition_cap", f.cg.condition_cap);
  f.stochastic_denoising = get_or(j, "stochastic_denoising", f.stochastic_denoising);
  const auto nu_mode = get_or<std::string>(j, "nu_mode", "estimate");
  if (nu_mode == "estimate") {
    f.nu_mode = fire::NuMode::kEstimate;
  } else if (nu_mode == "table") {
    f.nu_mode = fire::NuMode::kTable;
  } else {
    throw ConfigError("solver.fire.nu_mode must be estimate or table");
  }
  f.glm_nu_factor = get_or(j, "glm_nu_factor", f.glm_nu_factor);
  if (!(f.cg.tolerance > 0.0) || f.cg.max_iterations < 1 || !(f.cg.condition_cap > 0.0) ||
      !(f.glm_nu_factor > 0.0))
    throw ConfigError("solver.fire: tolerances, iteration caps and factors must be positive");
  return f;
}

SolverConfig parse_solver(const json& j) {
  check_keys(j, "solver",
             {"kind", "schedule", "n_tot", "delta", "eta", "fire", "fire_only", "dds", "diffpir",
              "snore", "guide"});
  SolverConfig s;
  s.kind = get_or<std::string>(j, "kind", s.kind);
  if (s.kind != "ddfire" && s.kind != "dds" && s.kind != "diffpir" && s.kind != "snore" &&
      s.kind != "fire-only")
    throw ConfigError("solver.kind must be ddfire, dds, diffpir, snore or fire-only");
  if (j.contains("schedule")) {
    const auto& sj = j.at("schedule");
    check_keys(sj, "solver.schedule", {"sigma_min2", "sigma_max2", "K"});
    s.schedule.sigma_min2 = get_or(sj, "sigma_min2", s.schedule.sigma_min2);
    s.schedule.sigma_max2 = get_or(sj, "sigma_max2", s.schedule.sigma_max2);
    s.schedule.steps = get_or(sj, "K", s.schedule.steps);
  }
  s.n_tot = get_or(j, "n_tot", s.n_tot);
  s.delta = get_or(j, "delta", s.delta);
  s.eta = get_or(j, "eta", s.eta);
  if (j.contains("fire")) s.fire = parse_fire(j.at("fire"));
  if (j.contains("fire_only")) {
    const auto& fj = j.at("fire_only");
    check_keys(fj, "solver.fire_only", {"iterations", "rho", "sigma_init"});
    s.fire_iterations = get_or(fj, "iterations", s.fire_iterations);
    s.fire_rho = get_or(fj, "rho", s.fire_rho);
    s.fire_sigma_init = get_or(fj, "sigma_init", s.fire_sigma_init);
  }
  if (j.contains("dds")) {
    const auto& dj = j.at("dds");
    check_keys(dj, "solver.dds", {"gamma", "cg_iterations", "eta"});
    s.dds.gamma = get_or(dj, "gamma", s.dds.gamma);
    s.dds.cg_iterations = get_or(dj, "cg_iterations", s.dds.cg_iterations);
    s.dds.eta = get_or(dj, "eta", s.dds.eta);
  }
  if (j.contains("diffpir")) {
    const auto& dj = j.at("diffpir");
    check_keys(dj, "solver.diffpir", {"lambda", "eta"});
    s.diffpir.lambda = get_or(dj, "lambda", s.diffpir.lambda);
    s.diffpir.eta = get_or(dj, "eta", s.diffpir.eta);
  }
  if (j.contains("snore")) {
    const auto& sj = j.at("snore");
    check_keys(sj, "solver.snore",
               {"delta", "levels", "iterations_per_level", "sigma_max", "sigma_min", "alpha_scale",
                "mm_rounds"});
    s.snore.delta = get_or(sj, "delta", s.snore.delta);
    s.snore.levels = get_or(sj, "levels", s.snore.levels);
    s.snore.iterations_per_level = get_or(sj, "iterations_per_level", s.snore.iterations_per_level);
    s.snore.sigma_max = get_or(sj, "sigma_max", s.snore.sigma_max);
    s.snore.sigma_min = get_or(sj, "sigma_min", s.snore.sigma_min);
    s.snore.alpha_scale = get_or(sj, "alpha_scale", s.snore.alpha_scale);
    s.snore.mm_rounds = get_or(sj, "mm_rounds", s.snore.mm_rounds);
  }
  if (j.contains("guide")) {
    const auto& gj = j.at("guide");
    check_keys(gj, "solver.guide", {"error_variance", "factor"});
    GuideConfig g;
    g.error_variance = get_or(gj, "error_variance", g.error_variance);
    g.factor = get_or(gj, "factor", g.factor);
    if (!(g.error_variance > 0.0) || !(g.factor > 0.0))
      throw ConfigError("solver.guide: error_variance and factor must be positive");
    s.guide = g;
  }
  if (s.schedule.steps < 1) throw ConfigError("solver.schedule.K must be >= 1");
  if (s.fire_iterations < 1 || !(s.fire_rho > 1.0) || !(s.fire_sigma_init > 0.0))
    throw ConfigError("solver.fire_only: need iterations >= 1, rho > 1, sigma_init > 0");
  return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    check_keys(j, "config",
               {"seed", "trials", "workers", "output_dir", "signal", "prior", "nu_table",
                "operator", "noise", "solver"});
    ExperimentConfig c;
    c.source_json = j.dump(2);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.trials = get_or(j, "trials", c.trials);
    c.workers = get_or(j, "workers", c.workers);
    c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir);
    if (c.trials < 0) throw ConfigError("trials must be >= 0");
    if (c.workers < 1) throw ConfigError("workers must be >= 1");
    if (j.contains("signal")) {
      const auto& sj = j.at("signal");
      check_keys(sj, "signal", {"rows", "cols", "peak"});
      c.shape.rows = get_or<Index>(sj, "rows", c.shape.rows);
      c.shape.cols = get_or<Index>(sj, "cols", c.shape.cols);
      c.peak = get_or(sj, "peak", c.peak);
    }
    if (c.shape.rows < 1 || c.shape.cols < 1) throw ConfigError("signal shape must be positive");
    if (j.contains("prior")) c.prior = parse_prior(j.at("prior"));
    if (j.contains("nu_table")) {
      const auto& nj = j.at("nu_table");
      check_keys(nj, "nu_table", {"points", "trials", "sigma_min", "sigma_max", "exact_if_available"});
      c.nu_table.points = get_or(nj, "points", c.nu_table.points);
      c.nu_table.trials = get_or(nj, "trials", c.nu_table.trials);
      if (nj.contains("sigma_min")) c.nu_table.sigma_min = nj.at("sigma_min").get<double>();
      if (nj.contains("sigma_max")) c.nu_table.sigma_max = nj.at("sigma_max").get<double>();
      c.nu_table.exact_if_available = get_or(nj, "exact_if_available", c.nu_table.exact_if_available);
      if (c.nu_table.points < 2 || c.nu_table.trials < 1)
        throw ConfigError("nu_table: need points >= 2 and trials >= 1");
    }
    if (j.contains("operator")) c.op = parse_operator(j.at("operator"));
    if (j.contains("noise")) c.noise = parse_noise(j.at("noise"));
    if (j.contains("solver")) c.solver = parse_solver(j.at("solver"));
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig config = parse_config(ss.str());
  // CSV inputs are relative to the config file
  const auto base = std::filesystem::path(path).parent_path();
  for (std::string* csv : {&config.op.kernel_csv, &config.op.masks_csv})
    if (!csv->empty() && std::filesystem::path(*csv).is_relative()) *csv = (base / *csv).string();
  return config;
}

std::vector<std::vector<double>> read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("CSV '" + path + "': non-numeric cell '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError("CSV '" + path + "': ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("CSV '" + path + "' is empty");
  return rows;
}

}  // namespace ddfire::harness
