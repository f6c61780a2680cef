#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "green_kernel.hpp"
#include "lattice_core.hpp"
#include "mollifier.hpp"
#include "noise_field.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "random.hpp"
#include "spde_solver.hpp"

// Coupled multi-resolution Monte Carlo: one noise realization at n_ref is
// aggregated to every coarser resolution, each resolution is solved with
// eps(n), and errors are measured in L^2(D) against the n_ref solution.
namespace lattice_spde {

struct ExperimentPlan {
  int d = 4;
  std::vector<int> ladder{4, 8, 16};
  int n_ref = 32;
  double theta = 12.0;
  double lambda = 0.8;
  double alpha = 1.25;
  int samples = 100;
  std::uint64_t seed = 1;
  DriftSpec drift = DriftSpec::arctan_linear(0.05);
  std::function<double(std::span<const double>)> g = [](std::span<const double> x) {
    double p = 1.0;
    for (double v : x) p *= std::cos(std::numbers::pi * v);
    return p;
  };
  CorrelationModel phi = CorrelationModel::gaussian(0.1);
  double tolerance = 1e-10;
  int max_iter = 200;
  double half_width = 0.5;
  SamplerBackend backend = SamplerBackend::automatic;
  unsigned threads = default_thread_count();

  double alpha_conjugate() const { return alpha / (alpha - 1.0); }
  double gamma() const { return truncation_rate_exponent(lambda, theta, d); }
  /// Predicted rate exponent gamma alpha / (2 alpha').
  double r_star() const { return gamma() * alpha / (2.0 * alpha_conjugate()); }

  void validate() const {
    if (ladder.empty()) throw ConfigError("ExperimentPlan: empty resolution ladder");
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      if (ladder[i] < 2) throw ConfigError("ExperimentPlan: resolutions must be >= 2");
      if (i > 0 && ladder[i] <= ladder[i - 1]) throw ConfigError("ExperimentPlan: ladder must be increasing");
      if (n_ref % ladder[i] != 0) throw ConfigError("ExperimentPlan: every resolution must divide n_ref");
    }
    if (n_ref <= ladder.back()) throw ConfigError("ExperimentPlan: n_ref must exceed the ladder");
    if (samples < 1) throw ConfigError("ExperimentPlan: samples must be >= 1");
    SolveConfig cfg;
    cfg.theta = theta;
    cfg.lambda = lambda;
    cfg.alpha = alpha;
    cfg.tolerance = tolerance;
    cfg.max_iter = max_iter;
    cfg.validate(d);
    if (!(drift.L < 4.0 * d)) throw ConfigError("ExperimentPlan: Lipschitz constant violates L < 4d");
    phi.require_integrable(d);
  }
};

/// Exact L^2(D) distance between two nested step functions, summed over fine cells.
inline double l2_error(const LatticeField& coarse, const LatticeField& fine) {
  const GridSpec& gc = coarse.grid();
  const GridSpec& gf = fine.grid();
  if (gc.d() != gf.d() || gf.n() % gc.n() != 0) throw ConfigError("l2_error: grids are not nested");
  const int d = gf.d(), nf = gf.n(), m = nf / gc.n();
  std::size_t cells = 1;
  for (int k = 0; k < d; ++k) cells *= static_cast<std::size_t>(nf);
  const auto cv = coarse.values(), fv = fine.values();
  const std::size_t ec = gc.extent(), ef = gf.extent();
  double sum = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t rest = c, lc = 0, lf = 0, sc = 1, sf = 1;
    bool coarse_in = true, fine_in = true;
    for (int k = d - 1; k >= 0; --k) {
      const int j = static_cast<int>(rest % nf);
      rest /= nf;
      const int J = j / m;
      if (j == 0) fine_in = false;
      if (J == 0) coarse_in = false;
      if (fine_in) lf += static_cast<std::size_t>(j - 1) * sf;
      if (coarse_in) lc += static_cast<std::size_t>(J - 1) * sc;
      sf *= ef;
      sc *= ec;
    }
    const double diff = (fine_in ? fv[lf] : 0.0) - (coarse_in ? cv[lc] : 0.0);
    sum += diff * diff;
  }
  return std::sqrt(sum * gf.cell_volume());
}

struct MomentEstimate {
  double estimate = 0.0;  ///< (mean e^p)^{1/p}
  double stderr_ = 0.0;   ///< bootstrap standard error
};

namespace detail {

inline double moment(std::span<const double> e, double p, std::span<const std::size_t> pick = {}) {
  double m = 0.0;
  const std::size_t n = pick.empty() ? e.size() : pick.size();
  for (std::size_t i = 0; i < n; ++i) m += std::pow(e[pick.empty() ? i : pick[i]], p);
  return std::pow(m / n, 1.0 / p);
}

inline std::vector<std::size_t> resample(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> U(0, n - 1);
  std::vector<std::size_t> pick(n);
  for (auto& v : pick) v = U(rng);
  return pick;
}

inline double stddev(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= v.size();
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.size() > 1 ? std::sqrt(s / (v.size() - 1)) : 0.0;
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (pos - i) * (v[i + 1] - v[i]);
}

}  // namespace detail

/// (E e^p)^{1/p} with a bootstrap standard error.
inline MomentEstimate mc_error_moment(std::span<const double> errors, double p, std::size_t resamples = 1000,
                                      std::uint64_t seed = 5) {
  if (errors.empty()) throw ConfigError("mc_error_moment: no samples");
  if (!(p >= 1.0)) throw ConfigError("mc_error_moment: p must be >= 1");
  MomentEstimate r;
  r.estimate = detail::moment(errors, p);
  auto rng = keyed_stream(seed, 0, stream_tag::bootstrap);
  std::vector<double> boot(resamples);
  for (auto& b : boot) b = detail::moment(errors, p, detail::resample(errors.size(), rng));
  r.stderr_ = detail::stddev(boot);
  return r;
}

/// Log-log least squares of error against n.
inline LogLogFit fit_rate(std::span<const double> ns, std::span<const double> errors) {
  if (ns.size() < 3) throw ConfigError("fit_rate: need at least 3 resolutions");
  return fit_loglog(ns, errors);
}

struct RateBand {
  LogLogFit fit;
  double lower = 0.0;  ///< 2.5% bootstrap quantile of the slope
  double upper = 0.0;  ///< 97.5% bootstrap quantile
};

/// fit_rate plus a 95% band from resampling whole coupled samples, so the
/// correlation between resolutions is kept. errors[i][s]: resolution i, sample s.
inline RateBand fit_rate_bootstrap(std::span<const double> ns, const std::vector<std::vector<double>>& errors, double p,
                                   std::size_t resamples = 2000, std::uint64_t seed = 5) {
  if (ns.size() != errors.size()) throw ConfigError("fit_rate_bootstrap: size mismatch");
  std::vector<double> est(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) est[i] = detail::moment(errors[i], p);
  RateBand band;
  band.fit = fit_rate(ns, est);
  auto rng = keyed_stream(seed, 1, stream_tag::bootstrap);
  std::vector<double> slopes;
  slopes.reserve(resamples);
  for (std::size_t b = 0; b < resamples; ++b) {
    const auto pick = detail::resample(errors[0].size(), rng);
    for (std::size_t i = 0; i < ns.size(); ++i) est[i] = detail::moment(errors[i], p, pick);
    slopes.push_back(fit_loglog(ns, est).slope);
  }
  band.lower = detail::quantile(slopes, 0.025);
  band.upper = detail::quantile(slopes, 0.975);
  return band;
}

// ---------------------------------------------------------------------------

struct StructureFunction {
  std::vector<double> radii;
  std::vector<double> values;  ///< mean squared increment at each radius
  LogLogFit fit;
};

/// S(r) at r = m/n, m = 1..max_offset: mean of (v_i - v_{i + m e_k})^2 over
/// interior pairs along every axis, averaged over the given fields.
inline StructureFunction holder_structure(const std::vector<LatticeField>& fields, int max_offset) {
  if (fields.empty()) throw ConfigError("holder_structure: no fields");
  const GridSpec& grid = fields[0].grid();
  const int d = grid.d(), ext = grid.extent();
  if (max_offset < 1 || max_offset >= ext) throw ConfigError("holder_structure: offsets must lie in 1..n-2");
  StructureFunction s;
  for (int m = 1; m <= max_offset; ++m) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& f : fields) {
      if (!(f.grid() == grid)) throw ConfigError("holder_structure: fields on different grids");
      const auto v = f.values();
      std::size_t stride = 1;
      for (int k = d - 1; k >= 0; --k) {
        for (std::size_t lin = 0; lin < v.size(); ++lin) {
          const int pos = static_cast<int>((lin / stride) % ext);
          if (pos + m >= ext) continue;
          const double diff = v[lin + m * stride] - v[lin];
          sum += diff * diff;
          ++count;
        }
        stride *= ext;
      }
    }
    if (count == 0) throw ConfigError("holder_structure: empty bin");
    s.radii.push_back(static_cast<double>(m) / grid.n());
    s.values.push_back(sum / count);
  }
  bool positive = true;
  for (double v : s.values) positive = positive && v > 0.0;
  if (positive && s.radii.size() >= 2) s.fit = fit_loglog(s.radii, s.values);
  return s;
}

// ---------------------------------------------------------------------------

struct CoupledSample {
  std::vector<Solution> solutions;  ///< one per ladder entry
  Solution reference;                ///< at n_ref
  std::vector<double> errors;       ///< L^2(D) error per ladder entry
  LatticeField gaussian_term{GridSpec(1, 2)};  ///< x -> int G_{n_ref} dF at n_ref
};

struct ExperimentReport {
  std::vector<int> ladder;
  std::vector<double> p_values;
  std::vector<std::vector<MomentEstimate>> estimates;  ///< [p][n]
  std::vector<bool> has_fit;                            ///< per p, needs >= 3 resolutions
  std::vector<RateBand> rate;                           ///< per p
  std::vector<std::vector<double>> errors;              ///< [n][sample]
  std::vector<std::vector<double>> apriori_norms;       ///< [n][sample], |u_n|_{L^{alpha'}}
  double gamma = 0.0;
  double r_star = 0.0;
  double max_contraction_ratio = 0.0;
  int max_iterations = 0;
  std::vector<double> kernel_constants;  ///< per ladder entry, then n_ref
  double wall_seconds = 0.0;
};

class ConvergenceLab {
 public:
  explicit ConvergenceLab(ExperimentPlan plan) : plan_(std::move(plan)) {
    plan_.validate();
    psi_ = std::make_shared<const Mollifier>(plan_.half_width);
    sampler_ = std::make_unique<NoiseSampler>(GridSpec(plan_.d, plan_.n_ref), plan_.phi, plan_.backend);
    auto all = plan_.ladder;
    all.push_back(plan_.n_ref);
    const auto pts = sample_points(plan_.d, 16, plan_.seed ^ 0x5eedULL);
    for (int n : all) {
      const GridSpec grid(plan_.d, n);
      const SolveConfig cfg = config_for(std::numeric_limits<double>::quiet_NaN());
      const auto kernel = KernelSpec::lattice(grid, cfg.eps_for(n, plan_.d), psi_);
      const double C = sup_l2_norm(kernel, pts, plan_.threads).sup;
      configs_.push_back(config_for(C));
      g_n_.push_back(make_g_n(plan_.g, grid));
    }
  }

  const ExperimentPlan& plan() const noexcept { return plan_; }
  const NoiseSampler& sampler() const noexcept { return *sampler_; }
  std::shared_ptr<const Mollifier> mollifier() const noexcept { return psi_; }
  const SolveConfig& config(std::size_t level) const { return configs_.at(level); }

  /// Solves every resolution on one shared realization at n_ref.
  CoupledSample run_on(const NoiseRealization& fine) const {
    CoupledSample s;
    const std::size_t L = plan_.ladder.size();
    const GridSpec ref_grid(plan_.d, plan_.n_ref);
    s.reference = solve(ref_grid, plan_.drift, g_n_[L], fine, configs_[L]);
    const auto kernel = KernelSpec::lattice(ref_grid, s.reference.eps, psi_);
    s.gaussian_term = noise_integral_field(fine, kernel);
    for (std::size_t i = 0; i < L; ++i) {
      const int n = plan_.ladder[i];
      const NoiseRealization coarse = aggregate(fine, plan_.n_ref / n);
      s.solutions.push_back(solve(GridSpec(plan_.d, n), plan_.drift, g_n_[i], coarse, configs_[i]));
      s.errors.push_back(l2_error(s.solutions.back().field, s.reference.field));
    }
    return s;
  }

  CoupledSample coupled_run(std::uint64_t index) const { return run_on(sampler_->sample(plan_.seed, index)); }

  /// Runs all samples; invokes `per_sample` (if given) with each finished sample in index order.
  ExperimentReport run(const std::vector<double>& p_values,
                       const std::function<void(std::size_t, const CoupledSample&)>& per_sample = {}) const {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t L = plan_.ladder.size(), S = static_cast<std::size_t>(plan_.samples);
    for (double p : p_values)
      if (!(p >= 1.0 && p <= plan_.alpha_conjugate())) throw ConfigError("run: p must lie in [1, alpha']");
    ExperimentReport r;
    r.ladder = plan_.ladder;
    r.p_values = p_values;
    r.gamma = plan_.gamma();
    r.r_star = plan_.r_star();
    r.errors.assign(L, std::vector<double>(S));
    r.apriori_norms.assign(L + 1, std::vector<double>(S));
    for (const auto& c : configs_) r.kernel_constants.push_back(c.kernel_constant);
    std::vector<double> ratio(S), iters(S);
    // samples 2q and 2q+1 share one circulant transform, so work in pairs
    const std::size_t pairs = (S + 1) / 2;
    parallel_for(pairs, plan_.threads, [&](std::size_t q) {
      for (std::size_t s = 2 * q; s < std::min(S, 2 * q + 2); ++s) {
        const CoupledSample cs = coupled_run(s);
        double mr = cs.reference.max_ratio;
        int it = cs.reference.iterations;
        for (std::size_t i = 0; i < L; ++i) {
          r.errors[i][s] = cs.errors[i];
          r.apriori_norms[i][s] = cs.solutions[i].apriori_norm;
          mr = std::max(mr, cs.solutions[i].max_ratio);
          it = std::max(it, cs.solutions[i].iterations);
        }
        r.apriori_norms[L][s] = cs.reference.apriori_norm;
        ratio[s] = mr;
        iters[s] = it;
        if (per_sample && plan_.threads <= 1) per_sample(s, cs);
      }
    });
    r.max_contraction_ratio = *std::max_element(ratio.begin(), ratio.end());
    r.max_iterations = static_cast<int>(*std::max_element(iters.begin(), iters.end()));
    std::vector<double> ns(plan_.ladder.begin(), plan_.ladder.end());
    for (double p : p_values) {
      std::vector<MomentEstimate> row;
      for (std::size_t i = 0; i < L; ++i) row.push_back(mc_error_moment(r.errors[i], p, 1000, plan_.seed + i));
      r.estimates.push_back(row);
      const bool fit = L >= 3;
      r.has_fit.push_back(fit);
      r.rate.push_back(fit ? fit_rate_bootstrap(ns, r.errors, p, 2000, plan_.seed) : RateBand{});
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }

 private:
  SolveConfig config_for(double C) const {
    SolveConfig cfg;
    cfg.theta = plan_.theta;
    cfg.lambda = plan_.lambda;
    cfg.alpha = plan_.alpha;
    cfg.tolerance = plan_.tolerance;
    cfg.max_iter = plan_.max_iter;
    cfg.mollifier = psi_;
    cfg.kernel_constant = C;
    return cfg;
  }

  ExperimentPlan plan_;
  std::shared_ptr<const Mollifier> psi_;
  std::unique_ptr<NoiseSampler> sampler_;
  std::vector<SolveConfig> configs_;
  std::vector<LatticeField> g_n_;
};

}  // namespace lattice_spde
