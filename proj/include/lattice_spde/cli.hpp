#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lattice_spde/convergence_lab.hpp"
#include "lattice_spde/errors.hpp"
#include "lattice_spde/green_kernel.hpp"
#include "lattice_spde/io.hpp"
#include "lattice_spde/lattice_core.hpp"
#include "lattice_spde/mollifier.hpp"
#include "lattice_spde/noise_field.hpp"
#include "lattice_spde/spde_solver.hpp"

// Batch front-end. A run is described by one JSON document; missing keys
// take the defaults below and command-line flags override top-level keys.
// Every JSON output echoes the resolved document under "config".
namespace lattice_spde::cli {

using json = nlohmann::json;

enum ExitCode : int { ok = 0, validation = 2, numerical = 3, io_failure = 4 };

inline json default_config() {
  return json::parse(R"({
    "d": 4,
    "n": 8,
    "seed": 1,
    "threads": 0,
    "out": "out",
    "theta": 12.0,
    "lambda": 0.8,
    "alpha": 1.25,
    "noise": {"model": "gaussian", "sigma": 0.1, "eta": 1.0, "rho": 0.5, "sampler": "auto", "quadrature_order": 16},
    "drift": {"kind": "arctan_linear", "L": 0.05, "shift": 0.0, "c": 0.0},
    "g": {"kind": "cosine_product", "value": 0.0},
    "solver": {"tolerance": 1e-10, "max_iter": 200, "damping": 1.0},
    "mollifier": {"half_width": 0.5, "order": 200},
    "converge": {"ladder": [4, 8, 16], "n_ref": 32, "samples": 100, "p": [1.0, 2.0]},
    "kernel": {"ns": [4, 8, 16], "points": 64, "series_n_ref": 0, "truncation_points": 8,
               "smoothing": {"enabled": true, "eps": [0.4, 0.2, 0.1, 0.05], "alpha": 1.2, "mc_points": 100000}},
    "holder": {"samples": 20, "max_offset": 0}
  })");
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
};

/// Defaults, merged with the config file (if any), then the flag overrides.
inline json resolve_config(const std::optional<std::filesystem::path>& path, const Overrides& o) {
  json cfg = default_config();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot open config " + path->string());
    json user;
    try {
      user = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!user.is_object()) throw ConfigError("config must be a JSON object");
    cfg.merge_patch(user);
  }
  if (o.seed) cfg["seed"] = *o.seed;
  if (o.threads) cfg["threads"] = *o.threads;
  if (o.out) cfg["out"] = *o.out;
  return cfg;
}

// ---------------------------------------------------------------------------
// Typed views of the document. All throw ConfigError / ModelError on bad input.

inline unsigned threads_of(const json& c) {
  const unsigned t = c.at("threads").get<unsigned>();
  return t == 0 ? default_thread_count() : t;
}

inline GridSpec grid_of(const json& c) { return GridSpec(c.at("d").get<int>(), c.at("n").get<int>()); }

inline std::optional<CorrelationModel> model_of(const json& c) {
  const json& nz = c.at("noise");
  const auto kind = nz.at("model").get<std::string>();
  const int d = c.at("d").get<int>();
  std::optional<CorrelationModel> m;
  if (kind == "zero") return std::nullopt;
  if (kind == "gaussian") m = CorrelationModel::gaussian(nz.at("sigma").get<double>());
  else if (kind == "riesz") m = CorrelationModel::riesz(nz.at("eta").get<double>());
  else if (kind == "factorized") {
    const auto& rho = nz.at("rho");
    m = CorrelationModel::factorized(rho.is_string() && rho.get<std::string>() == "inf"
                                         ? std::numeric_limits<double>::infinity()
                                         : rho.get<double>());
  } else {
    throw ConfigError("unknown noise model '" + kind + "' (expected gaussian, riesz, factorized or zero)");
  }
  m->require_integrable(d);
  return m;
}

inline SamplerBackend backend_of(const json& c) {
  const auto s = c.at("noise").at("sampler").get<std::string>();
  if (s == "auto") return SamplerBackend::automatic;
  if (s == "cholesky") return SamplerBackend::cholesky;
  if (s == "circulant") return SamplerBackend::circulant;
  throw ConfigError("unknown sampler '" + s + "'");
}

inline DriftSpec drift_of(const json& c) {
  const json& dr = c.at("drift");
  const auto kind = dr.at("kind").get<std::string>();
  DriftSpec f;
  if (kind == "zero") f = DriftSpec::zero();
  else if (kind == "linear") f = DriftSpec::linear(dr.at("L").get<double>());
  else if (kind == "constant") f = DriftSpec::constant(dr.at("c").get<double>());
  else if (kind == "arctan_linear") f = DriftSpec::arctan_linear(dr.at("L").get<double>(), dr.at("shift").get<double>());
  else throw ConfigError("unknown drift kind '" + kind + "'");
  const int d = c.at("d").get<int>();
  if (!(f.L < 4.0 * d))
    throw ConfigError("drift Lipschitz constant L=" + std::to_string(f.L) + " violates the gate L < 4d = " +
                      std::to_string(4 * d));
  return f;
}

inline std::function<double(std::span<const double>)> g_of(const json& c) {
  const json& g = c.at("g");
  const auto kind = g.at("kind").get<std::string>();
  if (kind == "zero") return [](std::span<const double>) { return 0.0; };
  if (kind == "constant") {
    const double v = g.at("value").get<double>();
    return [v](std::span<const double>) { return v; };
  }
  if (kind == "cosine_product")
    return [](std::span<const double> x) {
      double p = 1.0;
      for (double v : x) p *= std::cos(std::numbers::pi * v);
      return p;
    };
  throw ConfigError("unknown g kind '" + kind + "'");
}

inline std::shared_ptr<const Mollifier> mollifier_of(const json& c) {
  const json& m = c.at("mollifier");
  return std::make_shared<const Mollifier>(m.at("half_width").get<double>(), m.at("order").get<int>());
}

inline SolveConfig solve_config_of(const json& c, std::shared_ptr<const Mollifier> psi) {
  SolveConfig s;
  s.theta = c.at("theta").get<double>();
  s.lambda = c.at("lambda").get<double>();
  s.alpha = c.at("alpha").get<double>();
  const json& sv = c.at("solver");
  s.tolerance = sv.at("tolerance").get<double>();
  s.max_iter = sv.at("max_iter").get<int>();
  s.damping = sv.at("damping").get<double>();
  s.mollifier = std::move(psi);
  s.validate(c.at("d").get<int>());
  return s;
}

inline NoiseRealization noise_of(const json& c, const GridSpec& grid, const std::optional<CorrelationModel>& model,
                                 std::uint64_t index = 0, const NoiseSampler* sampler = nullptr) {
  if (!model) return NoiseRealization::zero(grid);
  if (sampler) return sampler->sample(c.at("seed").get<std::uint64_t>(), index);
  NoiseSampler s(grid, *model, backend_of(c), c.at("noise").at("quadrature_order").get<int>());
  return s.sample(c.at("seed").get<std::uint64_t>(), index);
}

inline std::filesystem::path out_dir(const json& c) {
  std::filesystem::path p = c.at("out").get<std::string>();
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw IoError("cannot create output directory " + p.string() + ": " + ec.message());
  return p;
}

inline constexpr std::size_t csv_cell_limit = 10000;

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------------------

inline int cmd_noise(const json& c, std::ostream& log) {
  const GridSpec grid = grid_of(c);
  const auto model = model_of(c);
  const auto dir = out_dir(c);
  const std::uint64_t seed = c.at("seed").get<std::uint64_t>();
  json report{{"command", "noise"}, {"config", c}, {"cells", grid.interior_size()}};
  NoiseRealization real = NoiseRealization::zero(grid);
  bool passed = true;
  if (model) {
    const IntegrabilityReport ir = check_integrability(*model, c.at("alpha").get<double>(),
                                                       c.at("lambda").get<double>(), grid.d());
    report["integrability"] = {{"alpha", ir.alpha},
                               {"alpha_conjugate", ir.alpha_conjugate},
                               {"alpha_upper", finite_or_null(ir.alpha_upper)},
                               {"alpha_admissible", ir.alpha_admissible},
                               {"norm_alpha_conjugate", finite_or_null(ir.norm_alpha_conjugate)},
                               {"norm_half_conjugate", finite_or_null(ir.norm_half_conjugate)},
                               {"in_L_alpha_conjugate", ir.in_l_alpha_conjugate},
                               {"in_L_half_conjugate", ir.in_l_half_conjugate},
                               {"member", ir.member}};
    const NoiseSampler sampler(grid, *model, backend_of(c), c.at("noise").at("quadrature_order").get<int>());
    real = sampler.sample(seed, 0);
    const CovarianceTable& table = sampler.table();
    double asym = 0.0;
    std::vector<int> k(grid.d()), mk(grid.d());
    for (std::size_t lin = 0; lin < grid.interior_size(); ++lin) {
      const auto i = grid.unravel(lin);
      for (int a = 0; a < grid.d(); ++a) {
        k[a] = i[a] - 1;
        mk[a] = -k[a];
      }
      asym = std::max(asym, std::abs(table(k) - table(mk)));
    }
    json cov{{"variance", table.variance()}, {"max_asymmetry", asym}, {"backend", sampler.backend_name()}};
    passed = asym <= 1e-12 * std::abs(table.variance()) && table.variance() > 0.0;
    if (grid.interior_size() <= 3000) {
      const auto psd = table.check_psd();
      cov["min_eigenvalue"] = psd.min_eigenvalue;
      cov["trace"] = psd.trace;
      cov["psd"] = psd.psd;
      passed = passed && psd.psd;
    } else {
      cov["psd"] = "not checked (grid above 3000 cells)";
    }
    if (sampler.backend() == SamplerBackend::circulant) cov["embedding_period"] = sampler.embedding_period();
    report["covariance"] = cov;
  } else {
    report["covariance"] = {{"variance", 0.0}, {"backend", "zero"}};
  }
  report["passed"] = passed;
  std::vector<std::string> files{"noise.bin", "noise_report.json"};
  io::write_field_binary(dir / "noise.bin", grid, seed, real.values);
  if (grid.interior_size() <= csv_cell_limit) {
    io::write_field_csv(dir / "noise.csv", grid, real.values);
    files.push_back("noise.csv");
  }
  report["files"] = files;
  io::write_text(dir / "noise_report.json", report.dump(2) + "\n");
  log << "noise: " << grid.interior_size() << " cells, validation " << (passed ? "passed" : "FAILED") << "\n";
  return passed ? ok : numerical;
}

inline int cmd_solve(const json& c, std::ostream& log) {
  const GridSpec grid = grid_of(c);
  const auto model = model_of(c);
  const DriftSpec drift = drift_of(c);
  const auto psi = mollifier_of(c);
  const SolveConfig cfg = solve_config_of(c, psi);
  const auto g = g_of(c);
  const auto dir = out_dir(c);
  const std::uint64_t seed = c.at("seed").get<std::uint64_t>();
  const NoiseRealization noise = noise_of(c, grid, model);
  const LatticeField g_n = make_g_n(g, grid);
  json diag{{"command", "solve"}, {"config", c}};
  try {
    const Solution sol = solve(grid, drift, g_n, noise, cfg);
    diag["status"] = "converged";
    diag["iterations"] = sol.iterations;
    diag["residual"] = sol.residual;
    diag["residual_history"] = sol.residual_history;
    diag["max_contraction_ratio"] = sol.max_ratio;
    diag["contraction_bound"] = drift.L / (4.0 * grid.d()) + 0.05;
    diag["eps"] = sol.eps;
    diag["kernel_constant"] = sol.kernel_constant;
    diag["apriori_norm_L_alpha_conjugate"] = sol.apriori_norm;
    diag["l2_norm"] = sol.field.l2_norm();
    io::write_field_binary(dir / "solution.bin", grid, seed, sol.field.values());
    if (grid.interior_size() <= csv_cell_limit) io::write_field_csv(dir / "solution.csv", grid, sol.field.values());
    io::write_text(dir / "solve.json", diag.dump(2) + "\n");
    log << "solve: converged in " << sol.iterations << " iterations, residual " << sol.residual << "\n";
    return ok;
  } catch (const NonConvergenceError& e) {
    diag["status"] = "non_convergence";
    diag["message"] = e.what();
    diag["residual_history"] = e.residual_history();
    io::write_text(dir / "solve.json", diag.dump(2) + "\n");
    log << "solve: " << e.what() << "\n";
    return numerical;
  }
}

inline int cmd_converge(const json& c, std::ostream& log) {
  const auto model = model_of(c);
  if (!model) throw ConfigError("converge needs a noise model");
  const json& cv = c.at("converge");
  ExperimentPlan plan;
  plan.d = c.at("d").get<int>();
  plan.ladder = cv.at("ladder").get<std::vector<int>>();
  plan.n_ref = cv.at("n_ref").get<int>();
  plan.theta = c.at("theta").get<double>();
  plan.lambda = c.at("lambda").get<double>();
  plan.alpha = c.at("alpha").get<double>();
  plan.samples = cv.at("samples").get<int>();
  plan.seed = c.at("seed").get<std::uint64_t>();
  plan.drift = drift_of(c);
  plan.g = g_of(c);
  plan.phi = *model;
  plan.tolerance = c.at("solver").at("tolerance").get<double>();
  plan.max_iter = c.at("solver").at("max_iter").get<int>();
  plan.half_width = c.at("mollifier").at("half_width").get<double>();
  plan.backend = backend_of(c);
  plan.threads = threads_of(c);
  const auto p_values = cv.at("p").get<std::vector<double>>();
  plan.validate();
  for (double p : p_values)
    if (!(p >= 1.0 && p <= plan.alpha_conjugate())) throw ConfigError("converge: every p must lie in [1, alpha']");
  const auto dir = out_dir(c);

  const ConvergenceLab lab(plan);
  const ExperimentReport r = lab.run(p_values);

  std::ostringstream csv;
  csv << std::setprecision(17) << "n,p,estimate,stderr\n";
  for (std::size_t ip = 0; ip < p_values.size(); ++ip)
    for (std::size_t i = 0; i < plan.ladder.size(); ++i)
      csv << plan.ladder[i] << ',' << p_values[ip] << ',' << r.estimates[ip][i].estimate << ','
          << r.estimates[ip][i].stderr_ << '\n';
  io::write_text(dir / "convergence.csv", csv.str());

  json rates = json::array();
  for (std::size_t ip = 0; ip < p_values.size(); ++ip) {
    json row{{"p", p_values[ip]}};
    if (r.has_fit[ip]) {
      row["slope"] = r.rate[ip].fit.slope;
      row["intercept"] = r.rate[ip].fit.intercept;
      row["residual"] = r.rate[ip].fit.residual;
      row["band"] = {r.rate[ip].lower, r.rate[ip].upper};
    } else {
      row["slope"] = nullptr;
      row["band"] = nullptr;
    }
    rates.push_back(row);
  }
  std::vector<int> all = plan.ladder;
  all.push_back(plan.n_ref);
  const AprioriReport ap = apriori_norm_check(all, r.apriori_norms, 2.0);
  std::vector<std::uint64_t> indices(plan.samples);
  for (int s = 0; s < plan.samples; ++s) indices[s] = static_cast<std::uint64_t>(s);
  json out{{"command", "converge"},
           {"config", c},
           {"rates", rates},
           {"r_star", r.r_star},
           {"gamma", r.gamma},
           {"seeds", {{"base", plan.seed}, {"sample_indices", indices}}},
           {"wall_seconds", r.wall_seconds},
           {"max_contraction_ratio", r.max_contraction_ratio},
           {"max_iterations", r.max_iterations},
           {"kernel_constants", r.kernel_constants},
           {"sampler", lab.sampler().backend_name()},
           {"apriori", {{"resolutions", ap.resolutions}, {"estimates", ap.estimates}, {"growth", ap.growth},
                        {"bounded", ap.bounded}}},
           {"surrogate", "errors are measured against the n_ref solution, not the continuum solution"}};
  io::write_text(dir / "convergence.json", out.dump(2) + "\n");
  log << "converge: " << plan.samples << " samples in " << r.wall_seconds << " s\n";
  return ok;
}

inline int cmd_kernel(const json& c, std::ostream& log) {
  const int d = c.at("d").get<int>();
  const double theta = c.at("theta").get<double>();
  if (!(theta > 2.0 * d - 4.0)) throw ConfigError("kernel: theta must exceed 2d-4");
  const json& kc = c.at("kernel");
  const auto ns = kc.at("ns").get<std::vector<int>>();
  if (ns.empty()) throw ConfigError("kernel: ns must not be empty");
  const int series_ref = kc.at("series_n_ref").get<int>();
  for (int n : ns) {
    if (n < 2) throw ConfigError("kernel: resolutions must be >= 2");
    if (series_ref != 0 && series_ref < n)
      throw ConfigError("kernel: series_n_ref=" + std::to_string(series_ref) + " is below n=" + std::to_string(n));
  }
  const auto psi = mollifier_of(c);
  const unsigned threads = threads_of(c);
  const std::uint64_t seed = c.at("seed").get<std::uint64_t>();
  const auto dir = out_dir(c);
  const auto pts = sample_points(d, kc.at("points").get<std::size_t>(), seed);
  const auto tpts = sample_points(d, kc.at("truncation_points").get<std::size_t>(), seed + 1);

  std::ostringstream csv;
  csv << std::setprecision(17) << "n,eps,sup_l2_norm,truncation_error,series_n_ref\n";
  json rows = json::array();
  std::vector<double> nd, sups, truncs;
  for (int n : ns) {
    const GridSpec grid(d, n);
    const double eps = epsilon_of_n(n, theta, d);
    const double sup = sup_l2_norm(KernelSpec::lattice(grid, eps, psi), pts, threads).sup;
    const int N = series_ref == 0 ? 4 * n : series_ref;
    const double trunc = truncation_error_norm(grid, eps, N, psi, tpts, threads).sup;
    csv << n << ',' << eps << ',' << sup << ',' << trunc << ',' << N << '\n';
    rows.push_back({{"n", n}, {"eps", eps}, {"sup_l2_norm", sup}, {"truncation_error", trunc}, {"series_n_ref", N}});
    nd.push_back(n);
    sups.push_back(sup);
    truncs.push_back(trunc);
  }
  io::write_text(dir / "kernel_norms.csv", csv.str());

  double max_growth = 0.0;
  for (std::size_t i = 1; i < sups.size(); ++i) max_growth = std::max(max_growth, sups[i] / sups[i - 1] - 1.0);
  json out{{"command", "kernel"},
           {"config", c},
           {"rows", rows},
           {"empirical_kernel_constant", *std::max_element(sups.begin(), sups.end())},
           {"max_consecutive_norm_growth", sups.size() > 1 ? json(max_growth) : json(nullptr)},
           {"bounded_norm_check", sups.size() > 1 ? json(max_growth <= 0.10) : json(nullptr)},
           {"predicted_truncation_rate", truncation_rate_exponent(c.at("lambda").get<double>(), theta, d)}};
  if (ns.size() >= 3) {
    const LogLogFit f = fit_loglog(nd, truncs);
    out["truncation_rate"] = {{"slope", f.slope}, {"intercept", f.intercept}, {"residual", f.residual}};
  } else {
    out["truncation_rate"] = nullptr;
  }
  const json& sm = kc.at("smoothing");
  if (sm.at("enabled").get<bool>()) {
    const auto eps_list = sm.at("eps").get<std::vector<double>>();
    const SmoothingRateReport sr = smoothing_error_rate(d, eps_list, sm.at("alpha").get<double>(), *psi,
                                                        sm.at("mc_points").get<std::size_t>(), seed, threads);
    out["smoothing"] = {{"eps", sr.eps},
                        {"proxy", sr.proxy},
                        {"stderr", sr.stderr_},
                        {"slope", sr.fit.slope},
                        {"residual", sr.fit.residual},
                        {"target_lambda", c.at("lambda").get<double>()}};
  } else {
    out["smoothing"] = nullptr;
  }
  io::write_text(dir / "kernel.json", out.dump(2) + "\n");
  log << "kernel: " << ns.size() << " resolutions\n";
  return ok;
}

inline int cmd_holder(const json& c, std::ostream& log) {
  const GridSpec grid = grid_of(c);
  const auto model = model_of(c);
  if (!model) throw ConfigError("holder needs a noise model");
  const DriftSpec drift = drift_of(c);
  const auto psi = mollifier_of(c);
  SolveConfig cfg = solve_config_of(c, psi);
  const auto g = g_of(c);
  const json& hc = c.at("holder");
  const int samples = hc.at("samples").get<int>();
  int max_offset = hc.at("max_offset").get<int>();
  if (max_offset == 0) max_offset = std::min(10, grid.n() - 3);
  if (samples < 1) throw ConfigError("holder: samples must be >= 1");
  if (max_offset < 2 || max_offset > grid.n() - 3) throw ConfigError("holder: max_offset must lie in 2..n-3 (needs n >= 5)");
  const auto dir = out_dir(c);

  const NoiseSampler sampler(grid, *model, backend_of(c), c.at("noise").at("quadrature_order").get<int>());
  const auto kernel = KernelSpec::lattice(grid, cfg.eps_for(grid.n(), grid.d()), psi);
  cfg.kernel_constant = sup_l2_norm(kernel, sample_points(grid.d(), 16, 11), threads_of(c)).sup;
  const LatticeField g_n = make_g_n(g, grid);
  std::vector<LatticeField> gaussian, full;
  for (int s = 0; s < samples; ++s) {
    const NoiseRealization nz = sampler.sample(c.at("seed").get<std::uint64_t>(), static_cast<std::uint64_t>(s));
    gaussian.push_back(noise_integral_field(nz, kernel));
    full.push_back(solve(grid, drift, g_n, nz, cfg).field);
  }
  const StructureFunction sg = holder_structure(gaussian, max_offset);
  const StructureFunction sf = holder_structure(full, max_offset);
  std::ostringstream csv;
  csv << std::setprecision(17) << "r,S_gaussian,S_solution\n";
  for (std::size_t i = 0; i < sg.radii.size(); ++i) csv << sg.radii[i] << ',' << sg.values[i] << ',' << sf.values[i] << '\n';
  io::write_text(dir / "holder.csv", csv.str());
  const double lambda = c.at("lambda").get<double>();
  json out{{"command", "holder"},
           {"config", c},
           {"radii", sg.radii},
           {"gaussian", {{"values", sg.values}, {"slope", sg.fit.slope}}},
           {"solution", {{"values", sf.values}, {"slope", sf.fit.slope}}},
           {"two_lambda", 2.0 * lambda},
           {"gaussian_within_0_4", std::abs(sg.fit.slope - 2.0 * lambda) <= 0.4 && sg.fit.slope > 0.0}};
  io::write_text(dir / "holder.json", out.dump(2) + "\n");
  log << "holder: gaussian slope " << sg.fit.slope << ", solution slope " << sf.fit.slope << "\n";
  return ok;
}

/// Runs one subcommand and maps failures to exit codes.
inline int dispatch(const std::string& command, const std::optional<std::filesystem::path>& config,
                    const Overrides& overrides, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  try {
    const json c = resolve_config(config, overrides);
    if (command == "noise") return cmd_noise(c, log);
    if (command == "solve") return cmd_solve(c, log);
    if (command == "converge") return cmd_converge(c, log);
    if (command == "kernel") return cmd_kernel(c, log);
    if (command == "holder") return cmd_holder(c, log);
    err << "unknown command " << command << "\n";
    return validation;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return io_failure;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return numerical;
  } catch (const Error& e) {
    err << "validation error: " << e.what() << "\n";
    return validation;
  } catch (const json::exception& e) {
    err << "validation error: bad config value: " << e.what() << "\n";
    return validation;
  }
}

}  // namespace lattice_spde::cli
