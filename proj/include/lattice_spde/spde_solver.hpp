#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "green_kernel.hpp"
#include "lattice_core.hpp"
#include "mollifier.hpp"
#include "noise_field.hpp"
#include "quadrature.hpp"
#include "random.hpp"

namespace lattice_spde {

/// f = f1 + f2 with |f1| <= M, f1 continuous and non-decreasing, f2 Lipschitz with constant L.
struct DriftSpec {
  std::function<double(double)> f1 = [](double) { return 0.0; };
  std::function<double(double)> f2 = [](double) { return 0.0; };
  double M = 0.0;
  double L = 0.0;
  std::string name = "zero";

  double operator()(double u) const { return f1(u) + f2(u); }

  static DriftSpec zero() { return {}; }
  static DriftSpec linear(double L) {
    return {[](double) { return 0.0; }, [L](double u) { return L * u; }, 0.0, std::abs(L), "linear"};
  }
  static DriftSpec constant(double c) {
    return {[c](double) { return c; }, [](double) { return 0.0; }, std::abs(c), 0.0, "constant"};
  }
  /// arctan(u) + shift + L u
  static DriftSpec arctan_linear(double L, double shift = 0.0) {
    return {[shift](double u) { return std::atan(u) + shift; }, [L](double u) { return L * u; },
            std::numbers::pi / 2 + std::abs(shift), std::abs(L), "arctan_linear"};
  }
};

struct MonotonicityAudit {
  double min_margin = 0.0;  ///< min over pairs of (u-v)(f(u)-f(v)) + L (u-v)^2
  double max_abs_f1 = 0.0;
  bool ok = false;
};

/// Samples (u,v) pairs uniformly in [-range, range]^2.
inline MonotonicityAudit audit_drift(const DriftSpec& f, std::size_t pairs = 10000, double range = 50.0,
                                     std::uint64_t seed = 7) {
  auto rng = keyed_stream(seed, 0, stream_tag::quadrature);
  std::uniform_real_distribution<double> U(-range, range);
  MonotonicityAudit a;
  a.min_margin = std::numeric_limits<double>::infinity();
  // the margin is a difference of terms of size ~ L range^2, so the -1e-12
  // floor is taken relative to the largest term seen
  double scale = 1.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const double u = U(rng), v = U(rng);
    const double cross = (u - v) * (f(u) - f(v)), slack = f.L * (u - v) * (u - v);
    a.min_margin = std::min(a.min_margin, cross + slack);
    scale = std::max({scale, std::abs(cross), slack});
    a.max_abs_f1 = std::max({a.max_abs_f1, std::abs(f.f1(u)), std::abs(f.f1(v))});
  }
  a.ok = a.min_margin >= -1e-12 * scale && a.max_abs_f1 <= f.M * (1.0 + 1e-12) + 1e-300;
  return a;
}

struct SolveConfig {
  double theta = 12.0;
  double lambda = 0.8;
  double alpha = 1.25;
  double tolerance = 1e-10;
  int max_iter = 200;
  double damping = 1.0;
  /// Smoothing parameter; NaN selects eps(n) = n^{(2d-4-theta)/theta}.
  double eps = std::numeric_limits<double>::quiet_NaN();
  /// Measured sup_x |G_n(x,.)|_{L^2}; NaN measures it on 16 sampled points.
  double kernel_constant = std::numeric_limits<double>::quiet_NaN();
  std::shared_ptr<const Mollifier> mollifier;

  double alpha_conjugate() const { return alpha / (alpha - 1.0); }

  void validate(int d) const {
    if (!(theta > 2.0 * d - 4.0)) throw ConfigError("SolveConfig: theta must exceed 2d-4");
    if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("SolveConfig: lambda must lie in (0,1)");
    if (!(alpha > 1.0)) throw ConfigError("SolveConfig: alpha must exceed 1");
    if (!(tolerance > 0.0)) throw ConfigError("SolveConfig: tolerance must be positive");
    if (max_iter < 1) throw ConfigError("SolveConfig: max_iter must be >= 1");
    if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("SolveConfig: damping must lie in (0,1]");
  }

  double eps_for(int n, int d) const { return std::isnan(eps) ? epsilon_of_n(n, theta, d) : eps; }
};

struct Solution {
  LatticeField field{GridSpec(1, 2)};
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_history;
  double max_ratio = 0.0;     ///< largest successive residual ratio above round-off
  double apriori_norm = 0.0;  ///< |u|_{L^{alpha'}(D)}
  double eps = 0.0;
  double kernel_constant = 0.0;
};

/// Cell-midpoint samples g((i + 1/2)/n) on interior cells.
inline LatticeField make_g_n(const std::function<double(std::span<const double>)>& g, const GridSpec& grid) {
  LatticeField out(grid);
  auto& v = out.mutable_values();
  std::vector<double> x(grid.d());
  for (std::size_t lin = 0; lin < v.size(); ++lin) {
    const auto i = grid.unravel(lin);
    for (int k = 0; k < grid.d(); ++k) x[k] = (i[k] + 0.5) / grid.n();
    v[lin] = g(x);
  }
  return out;
}

/// |g - g_n|_{L^p(D)} for the midpoint step function on all n^d cells, by
/// tensor Gauss-Legendre inside each cell.
inline double midpoint_error(const std::function<double(std::span<const double>)>& g, const GridSpec& grid,
                             double p = 2.0, int order = 6) {
  const int d = grid.d(), n = grid.n();
  const GaussRule& rule = gauss_legendre(order);
  const double h = 1.0 / n;
  std::size_t cells = 1;
  for (int k = 0; k < d; ++k) cells *= static_cast<std::size_t>(n);
  std::vector<int> j(d), q(d);
  std::vector<double> mid(d), x(d);
  double total = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t rest = c;
    for (int k = d - 1; k >= 0; --k) {
      j[k] = static_cast<int>(rest % n);
      rest /= n;
      mid[k] = (j[k] + 0.5) * h;
    }
    const double gm = g(mid);
    std::fill(q.begin(), q.end(), 0);
    for (;;) {
      double w = 1.0;
      for (int k = 0; k < d; ++k) {
        x[k] = mid[k] + 0.5 * h * rule.nodes[q[k]];
        w *= 0.5 * h * rule.weights[q[k]];
      }
      total += w * std::pow(std::abs(g(x) - gm), p);
      int k = d - 1;
      while (k >= 0 && ++q[k] == order) q[k--] = 0;
      if (k < 0) break;
    }
  }
  return std::pow(total, 1.0 / p);
}

namespace detail {

inline std::shared_ptr<const Mollifier> mollifier_or_default(const SolveConfig& cfg) {
  return cfg.mollifier ? cfg.mollifier : std::make_shared<const Mollifier>();
}

// g_n + n^d F as one right-hand side
inline LatticeField forcing(const LatticeField& g_n, const NoiseRealization& noise) {
  if (!(g_n.grid() == noise.grid)) throw ConfigError("solve: g_n and noise grids differ");
  std::vector<double> v(g_n.values().begin(), g_n.values().end());
  const double scale = std::pow(static_cast<double>(g_n.grid().n()), g_n.grid().d());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += scale * noise.values[i];
  return LatticeField(g_n.grid(), std::move(v));
}

}  // namespace detail

/// Picard iteration u <- (1 - w) u + w Phi(u) on the mild form
///   Phi(u) = G_n f(u) + G_n (g_n + n^d F),  G_n = (A^eps)^{-1} applied spectrally.
/// Returns the last iterate u with |Phi(u) - u|_inf <= tolerance.
inline Solution solve(const GridSpec& grid, const DriftSpec& drift, const LatticeField& g_n,
                      const NoiseRealization& noise, const SolveConfig& cfg) {
  const int d = grid.d();
  cfg.validate(d);
  if (!(drift.L < 4.0 * d))
    throw ConfigError("solve: Lipschitz constant L=" + std::to_string(drift.L) + " violates the gate L < 4d = " +
                      std::to_string(4 * d));
  if (!(g_n.grid() == grid)) throw ConfigError("solve: g_n grid mismatch");
  auto psi = detail::mollifier_or_default(cfg);
  Solution sol;
  sol.field = LatticeField(grid);
  sol.eps = cfg.eps_for(grid.n(), d);
  const auto kernel = KernelSpec::lattice(grid, sol.eps, psi);
  sol.kernel_constant = std::isnan(cfg.kernel_constant) ? sup_l2_norm(kernel, sample_points(d, 16, 11), 1).sup
                                                        : cfg.kernel_constant;
  if (drift.L > 0.0 && !(drift.L * sol.kernel_constant < 1.0))
    throw ConfigError("solve: Lipschitz constant violates the gate L < 1/C with measured kernel constant C=" +
                      std::to_string(sol.kernel_constant));

  const LatticeField b = apply_green(kernel, detail::forcing(g_n, noise));
  std::vector<double> u(grid.interior_size(), 0.0), fu(u.size());
  const double w = cfg.damping;
  for (int it = 0; it < cfg.max_iter; ++it) {
    for (std::size_t i = 0; i < u.size(); ++i) fu[i] = drift(u[i]);
    const LatticeField phi = apply_green(kernel, LatticeField(grid, fu));
    double res = 0.0, unorm = 0.0;
    std::vector<double> next(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double p = phi[i] + b[i];
      res = std::max(res, std::abs(p - u[i]));
      unorm = std::max(unorm, std::abs(u[i]));
      next[i] = (1.0 - w) * u[i] + w * p;
    }
    sol.residual_history.push_back(res);
    const std::size_t k = sol.residual_history.size();
    if (k >= 2) {
      const double prev = sol.residual_history[k - 2];
      if (res > 1e-12 * std::max(1.0, unorm) && prev > 0.0) sol.max_ratio = std::max(sol.max_ratio, res / prev);
    }
    if (res <= cfg.tolerance) {
      sol.iterations = static_cast<int>(k);
      sol.residual = res;
      sol.field = LatticeField(grid, std::move(u));
      sol.apriori_norm = sol.field.lp_norm(cfg.alpha_conjugate());
      return sol;
    }
    u = std::move(next);
  }
  throw NonConvergenceError("solve: no convergence within " + std::to_string(cfg.max_iter) + " iterations",
                            sol.residual_history);
}

/// Dense reference: materialises A^eps = E^T diag(lambda / Psi_hat) E from
/// the sampled sine basis and solves A^eps u = f(u) + g_n + n^d F by damped
/// Newton with a finite-difference diagonal Jacobian of f. Test oracle only.
inline Solution dense_solve_oracle(const GridSpec& grid, const DriftSpec& drift, const LatticeField& g_n,
                                   const NoiseRealization& noise, double eps, const Mollifier& psi,
                                   double tolerance = 1e-13, int max_iter = 100) {
  const std::size_t N = grid.interior_size();
  if (N > 1000) throw ConfigError("dense_solve_oracle: grid too large (at most 1000 unknowns)");
  const int d = grid.d(), n = grid.n();
  Eigen::MatrixXd E(N, N);
  Eigen::VectorXd diag(N);
  const double norm = std::pow(2.0 / n, 0.5 * d);
  for (std::size_t a = 0; a < N; ++a) {
    const MultiIndex beta(grid.unravel(a));
    const double ph = psi.big_psi_hat(eps, beta);
    if (ph < underflow_guard) throw NumericalError("dense_solve_oracle: Psi_hat underflow");
    diag[a] = eigenvalue(beta, grid) / ph;
    for (std::size_t i = 0; i < N; ++i) {
      const auto idx = grid.unravel(i);
      double v = norm;
      for (int k = 0; k < d; ++k) v *= std::sin(beta[k] * std::numbers::pi * idx[k] / n);
      E(a, i) = v;
    }
  }
  const Eigen::MatrixXd A = E.transpose() * diag.asDiagonal() * E;
  const LatticeField rhs_field = detail::forcing(g_n, noise);
  const Eigen::Map<const Eigen::VectorXd> rhs(rhs_field.values().data(), N);

  Eigen::VectorXd u = Eigen::VectorXd::Zero(N);
  auto residual = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd r = A * v - rhs;
    for (std::size_t i = 0; i < N; ++i) r[i] -= drift(v[i]);
    return r;
  };
  Solution sol;
  sol.field = LatticeField(grid);
  sol.eps = eps;
  Eigen::VectorXd r = residual(u);
  const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
  int it = 0;
  for (; it < max_iter && r.cwiseAbs().maxCoeff() > tolerance * scale; ++it) {
    Eigen::MatrixXd J = A;
    for (std::size_t i = 0; i < N; ++i) {
      const double h = 1e-6 * (1.0 + std::abs(u[i]));
      J(i, i) -= (drift(u[i] + h) - drift(u[i] - h)) / (2.0 * h);
    }
    const Eigen::VectorXd step = J.partialPivLu().solve(-r);
    double t = 1.0;
    Eigen::VectorXd trial = u + step, rt = residual(trial);
    while (rt.norm() > r.norm() && t > 1e-4) {
      t *= 0.5;
      trial = u + t * step;
      rt = residual(trial);
    }
    u = trial;
    r = rt;
    sol.residual_history.push_back(r.cwiseAbs().maxCoeff());
  }
  sol.iterations = it;
  sol.residual = r.cwiseAbs().maxCoeff();
  sol.field = LatticeField(grid, std::vector<double>(u.data(), u.data() + N));
  return sol;
}

struct ComparisonReport {
  bool precondition_ok = false;  ///< f >= h on the sampled range
  double max_violation = 0.0;    ///< max over cells of u_f - u_h
  bool holds = false;            ///< precondition_ok and max_violation <= tolerance
};

/// Solves with drifts f and h on shared data; f >= h should give u_f <= u_h.
inline ComparisonReport comparison_test(const GridSpec& grid, const DriftSpec& f, const DriftSpec& h,
                                        const LatticeField& g_n, const NoiseRealization& noise,
                                        const SolveConfig& cfg, double tolerance = 1e-8, double range = 100.0) {
  ComparisonReport r;
  r.precondition_ok = true;
  for (int i = 0; i <= 20000; ++i) {
    const double u = -range + 2.0 * range * i / 20000.0;
    if (f(u) < h(u) - 1e-12) r.precondition_ok = false;
  }
  if (!r.precondition_ok) return r;
  const Solution uf = solve(grid, f, g_n, noise, cfg);
  const Solution uh = solve(grid, h, g_n, noise, cfg);
  r.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < uf.field.size(); ++i) r.max_violation = std::max(r.max_violation, uf.field[i] - uh.field[i]);
  r.holds = r.max_violation <= tolerance;
  return r;
}

struct AprioriReport {
  std::vector<int> resolutions;
  std::vector<double> estimates;  ///< (E |u_n|^p_{L^{alpha'}})^{1/p}
  double growth = 0.0;            ///< largest-n estimate / smallest-n estimate
  bool bounded = false;           ///< growth <= 1.25
  double kappa = 0.0;             ///< reference bound, if constants were given
};

/// norms[i][s] = |u_{n_i}|_{L^{alpha'}} for sample s.
inline AprioriReport apriori_norm_check(const std::vector<int>& resolutions,
                                        const std::vector<std::vector<double>>& norms, double p) {
  if (resolutions.size() != norms.size() || resolutions.empty())
    throw ConfigError("apriori_norm_check: one sample set per resolution required");
  if (!(p >= 1.0)) throw ConfigError("apriori_norm_check: p must be >= 1");
  AprioriReport r;
  r.resolutions = resolutions;
  for (const auto& s : norms) {
    if (s.empty()) throw ConfigError("apriori_norm_check: empty sample set");
    double m = 0.0;
    for (double v : s) m += std::pow(std::abs(v), p);
    r.estimates.push_back(std::pow(m / s.size(), 1.0 / p));
  }
  const auto lo = std::min_element(resolutions.begin(), resolutions.end()) - resolutions.begin();
  const auto hi = std::max_element(resolutions.begin(), resolutions.end()) - resolutions.begin();
  const double first = r.estimates[lo], last = r.estimates[hi];
  r.growth = first > 0.0 ? last / first : (last > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  r.bounded = last <= 1.25 * first;
  return r;
}

/// kappa = ((M + |f2(0)|) C1 + |b|) / (1 - L C1)
inline double apriori_kappa(const DriftSpec& f, double C1, double b_norm) {
  const double denom = 1.0 - f.L * C1;
  if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
  return ((f.M + std::abs(f.f2(0.0))) * C1 + b_norm) / denom;
}

}  // namespace lattice_spde
