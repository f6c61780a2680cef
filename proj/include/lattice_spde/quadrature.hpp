#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace lattice_spde {

/// Nodes and weights of an n-point Gauss-Legendre rule on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

inline GaussRule compute_gauss_legendre(int n) {
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) <= 1e-15 * std::abs(x) + 1e-300) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

}  // namespace detail

/// Cached Gauss-Legendre rule; safe to call from several threads.
inline const GaussRule& gauss_legendre(int n) {
  if (n < 1) throw ConfigError("gauss_legendre: order must be positive");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<GaussRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussRule>(detail::compute_gauss_legendre(n));
  return *slot;
}

template <class F>
double integrate_gauss(F&& f, double a, double b, int order) {
  const GaussRule& rule = gauss_legendre(order);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double sum = 0.0;
  for (int i = 0; i < order; ++i) sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
  return sum * half;
}

/// Tensor Gauss-Legendre over the box prod [lo_k, hi_k].
inline double integrate_box(const std::function<double(std::span<const double>)>& f,
                            std::span<const double> lo, std::span<const double> hi, int order) {
  const std::size_t d = lo.size();
  const GaussRule& rule = gauss_legendre(order);
  std::vector<int> idx(d, 0);
  std::vector<double> x(d);
  double sum = 0.0;
  for (;;) {
    double w = 1.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double half = 0.5 * (hi[k] - lo[k]);
      x[k] = 0.5 * (hi[k] + lo[k]) + half * rule.nodes[idx[k]];
      w *= half * rule.weights[idx[k]];
    }
    sum += w * f(x);
    std::size_t k = 0;
    while (k < d && ++idx[k] == order) idx[k++] = 0;
    if (k == d) break;
  }
  return sum;
}

/// Gauss-Jacobi rule for int_0^1 t^b g(t) dt (b > -1), by Golub-Welsch on
/// the Jacobi matrix of the weight (1 + x)^b on [-1, 1]. Cached.
inline const GaussRule& gauss_jacobi_unit(int n, double b) {
  if (n < 1 || !(b > -1.0)) throw ConfigError("gauss_jacobi_unit: need n >= 1 and b > -1");
  static std::mutex mutex;
  static std::map<std::pair<int, double>, std::unique_ptr<GaussRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{n, b}];
  if (slot) return *slot;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    const double s = 2.0 * k + b;
    J(k, k) = k == 0 ? b / (b + 2.0) : b * b / (s * (s + 2.0));
    if (k + 1 < n) {
      const double m = k + 1.0, sm = 2.0 * m + b;
      const double off = std::sqrt(4.0 * m * m * (m + b) * (m + b) / (sm * sm * (sm + 1.0) * (sm - 1.0)));
      J(k, k + 1) = J(k + 1, k) = off;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  const double mu0 = std::pow(2.0, b + 1.0) / (b + 1.0);
  auto rule = std::make_unique<GaussRule>();
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule->nodes.push_back(0.5 * (1.0 + es.eigenvalues()(i)));
    rule->weights.push_back(mu0 * v0 * v0 * std::pow(2.0, -(b + 1.0)));
  }
  slot = std::move(rule);
  return *slot;
}

/// Integrates f over the box prod [0, a_k] when f = |x|^{-q} h(x) with h
/// smooth and q < d, i.e. a point singularity at the origin.
///
/// The box is split into d pyramids (one per face x_j = a_j) and each pyramid
/// is mapped to [0,1]^d by a Duffy substitution x_j = a_j t, x_i = a_i t s_i.
/// The Jacobian t^{d-1} times |x|^{-q} leaves t^{d-1-q} times a smooth
/// function of t, which a Gauss-Jacobi rule integrates exactly for
/// polynomial h.
inline double integrate_corner_singular(const std::function<double(std::span<const double>)>& f,
                                        std::span<const double> a, double q, int order) {
  const std::size_t d = a.size();
  if (q >= static_cast<double>(d)) throw ModelError("integrate_corner_singular: singularity not integrable");
  const GaussRule& radial = gauss_jacobi_unit(order, static_cast<double>(d) - 1.0 - q);
  const GaussRule& rule = gauss_legendre(order);
  double volume = 1.0;
  for (double ak : a) volume *= ak;
  std::vector<double> x(d);
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<int> idx(d, 0);  // idx[0] drives t, the rest drive s_i
    for (;;) {
      const double t = radial.nodes[idx[0]];
      double weight = radial.weights[idx[0]] * std::pow(t, q);
      x[j] = a[j] * t;
      std::size_t slot = 1;
      for (std::size_t i = 0; i < d; ++i) {
        if (i == j) continue;
        const double s = 0.5 * (1.0 + rule.nodes[idx[slot]]);
        weight *= 0.5 * rule.weights[idx[slot]];
        x[i] = a[i] * t * s;
        ++slot;
      }
      total += weight * f(x);
      std::size_t k = 0;
      while (k < d && ++idx[k] == order) idx[k++] = 0;
      if (k == d) break;
    }
  }
  return total * volume;
}

/// Exponential-sum rule for negative powers on [a_min, a_max]:
///   1/a   ~ sum_j w1_j exp(-t_j a),   1/a^2 ~ sum_j w2_j exp(-t_j a).
/// Built from the trapezoid rule on t = e^s, which converges like exp(-pi^2/h).
/// Writing 1/|beta|^2 this way makes series kernels separable across axes.
class ExpSumRule {
 public:
  ExpSumRule(double a_min, double a_max, double rel_tol = 1e-13, double step = 0.2) {
    if (!(a_min > 0.0) || !(a_max >= a_min)) throw ConfigError("ExpSumRule: need 0 < a_min <= a_max");
    const double s_lo = std::log(rel_tol / a_max);
    const double s_hi = std::log(40.0 / a_min);
    const int count = static_cast<int>(std::ceil((s_hi - s_lo) / step)) + 1;
    t_.reserve(count);
    for (int j = 0; j < count; ++j) {
      const double s = s_lo + j * step;
      const double t = std::exp(s);
      t_.push_back(t);
      w1_.push_back(step * t);
      w2_.push_back(step * t * t);
    }
  }

  std::size_t size() const noexcept { return t_.size(); }
  std::span<const double> t() const noexcept { return t_; }
  std::span<const double> w_inverse() const noexcept { return w1_; }
  std::span<const double> w_inverse_square() const noexcept { return w2_; }

 private:
  std::vector<double> t_, w1_, w2_;
};

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  ///< RMS of log-residuals
};

/// Least squares of log(y) on log(x).
inline LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("fit_loglog: need matching inputs of size >= 2");
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw NumericalError("fit_loglog: non-positive value (degenerate errors)");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0) throw ConfigError("fit_loglog: abscissae are all equal");
  LogLogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

}  // namespace lattice_spde
