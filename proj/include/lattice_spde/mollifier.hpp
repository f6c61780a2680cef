#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "errors.hpp"
#include "lattice_core.hpp"
#include "quadrature.hpp"

namespace lattice_spde {

/// The even bump psi used to smooth the Green kernel, with its cosine
/// transform psi_hat(xi) = int cos(pi xi x) psi(x) dx.
///
/// psi is built as an autocorrelation, psi = (eta * eta) / |eta|_1^2, where
/// eta(x) = exp(-1 / (1 - (x/s)^2)) on (-s, s) and s = half_width / 2. Hence
/// supp psi = (-half_width, half_width), int psi = 1 and
/// psi_hat = (eta_hat / eta_hat(0))^2 >= 0, so the smoothed eigenvalues
/// lambda_beta / Psi_hat(eps beta) never change sign.
///
/// psi_hat is served from a cache of eta_hat on a uniform frequency grid
/// (cubic interpolation, then squared); frequencies beyond the cache are
/// evaluated by quadrature directly.
class Mollifier {
 public:
  explicit Mollifier(double half_width = 0.5, int order = 200, double cache_max = 128.0, int cache_per_unit = 128)
      : half_width_(half_width), s_(0.5 * half_width), order_(order), cache_step_(1.0 / cache_per_unit) {
    if (!(half_width > 0.0)) throw ConfigError("Mollifier: half_width must be positive");
    if (half_width > 1.0) throw ConfigError("Mollifier: support violation, half_width must be <= 1 so supp psi lies in (-1,1)");
    if (order < 8) throw ConfigError("Mollifier: quadrature order too small");
    const GaussRule& rule = gauss_legendre(order_);
    nodes_.resize(order_);
    weighted_eta_.resize(order_);
    eta_l1_ = 0.0;
    for (int i = 0; i < order_; ++i) {
      nodes_[i] = s_ * rule.nodes[i];
      weighted_eta_[i] = s_ * rule.weights[i] * eta(nodes_[i]);
      eta_l1_ += weighted_eta_[i];
    }
    const auto count = static_cast<std::size_t>(std::ceil(cache_max / cache_step_)) + 3;
    cache_.resize(count);
    for (std::size_t j = 0; j < count; ++j) cache_[j] = eta_hat_quadrature(j * cache_step_, order_);
    cache_max_ = (count - 3) * cache_step_;
  }

  double half_width() const noexcept { return half_width_; }
  int order() const noexcept { return order_; }
  double cache_max() const noexcept { return cache_max_; }

  /// eta(x), unnormalised.
  double eta(double x) const noexcept {
    const double r = x / s_;
    if (std::abs(r) >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - r * r));
  }

  /// psi(x) by quadrature of the autocorrelation integral.
  double psi(double x) const {
    const double lo = std::max(-s_, x - s_), hi = std::min(s_, x + s_);
    if (!(lo < hi)) return 0.0;
    const double conv = integrate_gauss([&](double y) { return eta(y) * eta(x - y); }, lo, hi, order_);
    return conv / (eta_l1_ * eta_l1_);
  }

  double psi_hat(double xi) const noexcept {
    xi = std::abs(xi);
    if (xi > cache_max_) return psi_hat_exact(xi);
    const double pos = xi / cache_step_;
    const auto j = static_cast<long>(pos);
    const double t = pos - j;
    auto node = [&](long k) { return cache_[static_cast<std::size_t>(std::abs(k))]; };  // eta_hat is even
    const double f0 = node(j - 1), f1 = node(j), f2 = node(j + 1), f3 = node(j + 2);
    // 4-point Lagrange through nodes -1, 0, 1, 2
    const double a = -t * (t - 1) * (t - 2) / 6.0, b = (t + 1) * (t - 1) * (t - 2) / 2.0,
                 c = -(t + 1) * t * (t - 2) / 2.0, e = (t + 1) * t * (t - 1) / 6.0;
    const double amp = a * f0 + b * f1 + c * f2 + e * f3;
    return amp * amp;
  }

  /// psi_hat by direct quadrature; the rule is enlarged when xi is too
  /// oscillatory for the configured order.
  double psi_hat_exact(double xi) const {
    const double amp = eta_hat_quadrature(std::abs(xi), order_);
    return amp * amp;
  }

  /// Psi_hat(xi) = prod psi_hat(xi_k)
  double big_psi_hat(std::span<const double> xi) const noexcept {
    double p = 1.0;
    for (double v : xi) p *= psi_hat(v);
    return p;
  }

  double big_psi_hat(double eps, const MultiIndex& beta) const noexcept {
    double p = 1.0;
    for (std::size_t k = 0; k < beta.size(); ++k) p *= psi_hat(eps * beta[k]);
    return p;
  }

  /// sup over `samples` uniform frequencies in (0, xi_max] of xi^theta psi_hat(xi).
  double decay_constant(double theta, double xi_max, int samples = 4000) const {
    double sup = 0.0;
    for (int i = 1; i <= samples; ++i) {
      const double xi = xi_max * i / samples;
      sup = std::max(sup, std::pow(xi, theta) * psi_hat(xi));
    }
    return sup;
  }

  /// Smallest scanned frequency beyond which psi_hat stays below tol.
  double frequency_cutoff(double tol) const {
    const double step = 0.25;
    const double limit = 400.0 / half_width_;
    double last = 0.0;
    for (double xi = 0.0; xi <= limit; xi += step)
      if (psi_hat(xi) >= tol) last = xi;
    return last + step;
  }

 private:
  // eta_hat(xi) / eta_hat(0)
  double eta_hat_quadrature(double xi, int order) const {
    const int needed = 2 * static_cast<int>(std::ceil(std::numbers::pi * xi * s_)) + 40;
    if (needed > order) {
      const GaussRule& rule = gauss_legendre(needed);
      double sum = 0.0;
      for (int i = 0; i < needed; ++i) {
        const double x = s_ * rule.nodes[i];
        sum += s_ * rule.weights[i] * eta(x) * std::cos(std::numbers::pi * xi * x);
      }
      return sum / eta_l1_;
    }
    double sum = 0.0;
    for (int i = 0; i < order; ++i) sum += weighted_eta_[i] * std::cos(std::numbers::pi * xi * nodes_[i]);
    return sum / eta_l1_;
  }

  double half_width_;
  double s_;
  int order_;
  double cache_step_;
  double cache_max_ = 0.0;
  double eta_l1_ = 0.0;
  std::vector<double> nodes_;
  std::vector<double> weighted_eta_;
  std::vector<double> cache_;
};

inline Mollifier build_psi(double half_width, int order = 200) { return Mollifier(half_width, order); }

/// eps(n) = n^{(2d-4-theta)/theta}; requires theta > 2d - 4.
inline double epsilon_of_n(int n, double theta, int d) {
  if (!(theta > 2.0 * d - 4.0)) throw ConfigError("epsilon_of_n: theta must exceed 2d-4");
  if (n < 1) throw ConfigError("epsilon_of_n: n must be >= 1");
  return std::pow(static_cast<double>(n), (2.0 * d - 4.0 - theta) / theta);
}

}  // namespace lattice_spde
