#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fftw.hpp"
#include "green_kernel.hpp"
#include "lattice_core.hpp"
#include "quadrature.hpp"
#include "random.hpp"

namespace lattice_spde {

/// Stationary correlation density phi(z) of the coloured noise.
///   riesz(eta):       |z|^{-eta}, locally integrable iff eta < d
///   gaussian(sigma):  exp(-|z|^2 / (2 sigma^2)), so phi(0) = 1
///   factorized(rho):  prod_k max(0, 1 - |z_k|/rho), the autocorrelation of a
///                     box of width rho per axis; rho = inf gives phi = 1
class CorrelationModel {
 public:
  enum class Kind { riesz, gaussian, factorized };

  static CorrelationModel riesz(double eta) {
    if (!(eta > 0.0)) throw ModelError("riesz: exponent eta must be positive");
    return CorrelationModel(Kind::riesz, eta);
  }
  static CorrelationModel gaussian(double sigma) {
    if (!(sigma > 0.0)) throw ModelError("gaussian: bandwidth sigma must be positive");
    return CorrelationModel(Kind::gaussian, sigma);
  }
  static CorrelationModel factorized(double rho) {
    if (!(rho > 0.0)) throw ModelError("factorized: width rho must be positive");
    return CorrelationModel(Kind::factorized, rho);
  }

  Kind kind() const noexcept { return kind_; }
  double parameter() const noexcept { return param_; }
  bool separable() const noexcept { return kind_ != Kind::riesz; }

  std::string name() const {
    switch (kind_) {
      case Kind::riesz: return "riesz";
      case Kind::gaussian: return "gaussian";
      case Kind::factorized: return "factorized";
    }
    return "?";
  }

  /// One-axis factor of a separable model.
  double axis(double z) const noexcept {
    if (kind_ == Kind::gaussian) return std::exp(-z * z / (2.0 * param_ * param_));
    if (std::isinf(param_)) return 1.0;
    return std::max(0.0, 1.0 - std::abs(z) / param_);
  }

  double operator()(std::span<const double> z) const noexcept {
    if (kind_ == Kind::riesz) {
      double r2 = 0.0;
      for (double v : z) r2 += v * v;
      return std::pow(r2, -0.5 * param_);
    }
    double p = 1.0;
    for (double v : z) p *= axis(v);
    return p;
  }

  /// Throws ModelError when phi is not locally integrable in dimension d.
  void require_integrable(int d) const {
    if (kind_ == Kind::riesz && param_ >= d)
      throw ModelError("riesz integrability violated: exponent eta must be < d for phi to be locally integrable");
  }

 private:
  CorrelationModel(Kind k, double p) : kind_(k), param_(p) {}
  Kind kind_;
  double param_;
};

namespace detail {

// int_{-h}^{h} (h - |u|) phi_1(k h + u) du, split where the integrand has kinks.
inline double axis_cell_covariance(const CorrelationModel& model, int k, double h, int order) {
  std::vector<double> cuts{-h, 0.0, h};
  if (model.kind() == CorrelationModel::Kind::factorized && !std::isinf(model.parameter())) {
    for (double z : {-model.parameter(), 0.0, model.parameter()}) {
      const double u = z - k * h;
      if (u > -h && u < h) cuts.push_back(u);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] - cuts[i] <= 0.0) continue;
    sum += integrate_gauss([&](double u) { return (h - std::abs(u)) * model.axis(k * h + u); }, cuts[i], cuts[i + 1],
                           order);
  }
  return sum;
}

// Riesz covariance: integrate prod_i (h - |z_i - k_i h|) |z|^{-eta} over the
// box prod [(k_i - 1)h, (k_i + 1)h], split at the weight kinks and at 0.
inline double riesz_cell_covariance(double eta, std::span<const int> k, double h, int order) {
  const std::size_t d = k.size();
  std::vector<std::vector<double>> cuts(d);
  for (std::size_t i = 0; i < d; ++i) {
    cuts[i] = {(k[i] - 1) * h, k[i] * h, (k[i] + 1) * h};
  }
  auto weight = [&](std::span<const double> z) {
    double w = 1.0;
    for (std::size_t i = 0; i < d; ++i) w *= h - std::abs(z[i] - k[i] * h);
    return w;
  };
  double total = 0.0;
  std::vector<std::size_t> cell(d, 0);
  std::vector<double> lo(d), hi(d), sign(d), shifted(d);
  for (;;) {
    bool corner = true;
    for (std::size_t i = 0; i < d; ++i) {
      lo[i] = cuts[i][cell[i]];
      hi[i] = cuts[i][cell[i] + 1];
      if (lo[i] == 0.0) sign[i] = 1.0;
      else if (hi[i] == 0.0) sign[i] = -1.0;
      else corner = false;
    }
    if (corner) {
      // box has the singularity at a corner; reflect it to prod [0, a_i]
      std::vector<double> a(d);
      for (std::size_t i = 0; i < d; ++i) a[i] = hi[i] - lo[i];
      total += integrate_corner_singular(
          [&](std::span<const double> t) {
            double r2 = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
              shifted[i] = sign[i] * t[i];
              r2 += t[i] * t[i];
            }
            return weight(shifted) * std::pow(r2, -0.5 * eta);
          },
          a, eta, order);
    } else {
      total += integrate_box(
          [&](std::span<const double> z) {
            double r2 = 0.0;
            for (double v : z) r2 += v * v;
            return weight(z) * std::pow(r2, -0.5 * eta);
          },
          lo, hi, order);
    }
    std::size_t i = 0;
    while (i < d && ++cell[i] == cuts[i].size() - 1) cell[i++] = 0;
    if (i == d) break;
  }
  return total;
}

}  // namespace detail

/// C(k) = int_{D_0} int_{D_k} phi(x - y) dx dy
///      = int_{[-h,h]^d} prod_i (h - |u_i|) phi(k h + u) du,  h = 1/n.
inline double cell_covariance(std::span<const int> k, const GridSpec& grid, const CorrelationModel& model,
                              int order = 16) {
  if (static_cast<int>(k.size()) != grid.d()) throw ConfigError("cell_covariance: offset dimension mismatch");
  model.require_integrable(grid.d());
  const double h = 1.0 / grid.n();
  if (model.separable()) {
    double p = 1.0;
    for (int ki : k) p *= detail::axis_cell_covariance(model, ki, h, std::max(order, 32));
    return p;
  }
  std::vector<int> a(k.begin(), k.end());
  for (int& v : a) v = std::abs(v);
  if (grid.d() == 1 && a[0] == 0) {
    const double eta = model.parameter();
    return 2.0 * std::pow(h, 2.0 - eta) * (1.0 / (1.0 - eta) - 1.0 / (2.0 - eta));
  }
  return detail::riesz_cell_covariance(model.parameter(), a, h, order);
}

/// Cell covariances C(k) for offsets with |k_i| <= max_offset.
class CovarianceTable {
 public:
  CovarianceTable(GridSpec grid, CorrelationModel model, int max_offset = -1, int order = 16)
      : grid_(grid), model_(model), max_offset_(max_offset < 0 ? grid.n() - 1 : max_offset), order_(order) {
    model_.require_integrable(grid_.d());
    const int K = max_offset_;
    if (model_.separable()) {
      axis_.resize(K + 1);
      for (int k = 0; k <= K; ++k) axis_[k] = detail::axis_cell_covariance(model_, k, 1.0 / grid_.n(), std::max(order, 32));
      return;
    }
    // riesz depends on k only through the sorted absolute offsets
    std::vector<int> key(grid_.d(), 0);
    for (;;) {
      riesz_[key] = cell_covariance(key, grid_, model_, order_);
      int i = grid_.d() - 1;
      while (i >= 0 && key[i] == K) --i;
      if (i < 0) break;
      const int v = key[i] + 1;
      for (int j = i; j < grid_.d(); ++j) key[j] = v;
    }
  }

  const GridSpec& grid() const noexcept { return grid_; }
  const CorrelationModel& model() const noexcept { return model_; }
  int max_offset() const noexcept { return max_offset_; }
  double variance() const { return (*this)(std::vector<int>(grid_.d(), 0)); }

  double operator()(std::span<const int> k) const {
    if (static_cast<int>(k.size()) != grid_.d()) throw ConfigError("CovarianceTable: offset dimension mismatch");
    if (model_.separable()) {
      double p = 1.0;
      for (int v : k) {
        if (std::abs(v) > max_offset_) throw IndexError("CovarianceTable: offset beyond table");
        p *= axis_[std::abs(v)];
      }
      return p;
    }
    std::vector<int> key(k.begin(), k.end());
    for (int& v : key) {
      v = std::abs(v);
      if (v > max_offset_) throw IndexError("CovarianceTable: offset beyond table");
    }
    std::sort(key.begin(), key.end());
    return riesz_.at(key);
  }

  /// (C(i - j)) over interior cells, lexicographic order.
  Eigen::MatrixXd dense_matrix() const {
    if (max_offset_ < grid_.n() - 2) throw ConfigError("CovarianceTable: table too small for the dense matrix");
    const std::size_t N = grid_.interior_size();
    Eigen::MatrixXd C(N, N);
    std::vector<int> off(grid_.d());
    for (std::size_t a = 0; a < N; ++a) {
      const auto ia = grid_.unravel(a);
      for (std::size_t b = a; b < N; ++b) {
        const auto ib = grid_.unravel(b);
        for (int k = 0; k < grid_.d(); ++k) off[k] = ia[k] - ib[k];
        C(a, b) = C(b, a) = (*this)(off);
      }
    }
    return C;
  }

  struct PsdReport {
    double min_eigenvalue = 0.0;
    double trace = 0.0;
    bool psd = false;
  };

  PsdReport check_psd() const {
    const Eigen::MatrixXd C = dense_matrix();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
    PsdReport r;
    r.min_eigenvalue = es.eigenvalues().minCoeff();
    r.trace = C.trace();
    r.psd = r.min_eigenvalue >= -1e-10 * r.trace;
    return r;
  }

 private:
  GridSpec grid_;
  CorrelationModel model_;
  int max_offset_;
  int order_;
  std::vector<double> axis_;
  std::map<std::vector<int>, double> riesz_;
};

// ---------------------------------------------------------------------------

struct IntegrabilityReport {
  double alpha = 0.0;
  double alpha_conjugate = 0.0;       ///< alpha' = alpha / (alpha - 1)
  double alpha_upper = 0.0;           ///< d / max((d-2)(2-lambda), (d-1) lambda)
  bool alpha_admissible = false;      ///< 1 < alpha < alpha_upper
  double norm_alpha_conjugate = 0.0;  ///< |phi|_{L^{alpha'}([-2,2]^d)}, inf if divergent
  double norm_half_conjugate = 0.0;   ///< same in L^{alpha'/2}
  bool in_l_alpha_conjugate = false;
  bool in_l_half_conjugate = false;
  bool member = false;                ///< phi in L^{alpha'} or L^{alpha'/2}
};

inline double holder_alpha_upper(int d, double lambda) {
  const double denom = std::max((d - 2.0) * (2.0 - lambda), (d - 1.0) * lambda);
  return denom > 0.0 ? d / denom : std::numeric_limits<double>::infinity();
}

/// L^p norm of phi on [-2,2]^d.
inline double correlation_norm(const CorrelationModel& model, int d, double p, int order = 64) {
  if (model.separable()) {
    double one = 0.0;
    for (double lo : {-2.0, 0.0}) {
      std::vector<double> cuts{lo, lo + 2.0};
      if (model.kind() == CorrelationModel::Kind::factorized && !std::isinf(model.parameter()))
        for (double c : {-model.parameter(), model.parameter()})
          if (c > lo && c < lo + 2.0) cuts.insert(cuts.begin() + 1, c);
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        one += integrate_gauss([&](double z) { return std::pow(model.axis(z), p); }, cuts[i], cuts[i + 1], order);
    }
    return std::pow(std::pow(one, d), 1.0 / p);
  }
  const double q = model.parameter() * p;
  if (q >= d) return std::numeric_limits<double>::infinity();
  std::vector<double> a(d, 2.0);
  const double orthant = integrate_corner_singular(
      [&](std::span<const double> z) {
        double r2 = 0.0;
        for (double v : z) r2 += v * v;
        return std::pow(r2, -0.5 * q);
      },
      a, q, std::min(order, 24));
  return std::pow(orthant * std::pow(2.0, d), 1.0 / p);
}

inline IntegrabilityReport check_integrability(const CorrelationModel& model, double alpha, double lambda, int d) {
  if (!(alpha > 1.0)) throw ConfigError("check_integrability: alpha must exceed 1");
  IntegrabilityReport r;
  r.alpha = alpha;
  r.alpha_conjugate = alpha / (alpha - 1.0);
  r.alpha_upper = holder_alpha_upper(d, lambda);
  r.alpha_admissible = alpha < r.alpha_upper;
  if (model.kind() == CorrelationModel::Kind::riesz) {
    r.in_l_alpha_conjugate = model.parameter() * r.alpha_conjugate < d;
    r.in_l_half_conjugate = model.parameter() * r.alpha_conjugate / 2.0 < d;
  } else {
    r.in_l_alpha_conjugate = r.in_l_half_conjugate = true;
  }
  r.norm_alpha_conjugate = correlation_norm(model, d, r.alpha_conjugate);
  r.norm_half_conjugate = correlation_norm(model, d, r.alpha_conjugate / 2.0);
  r.member = r.in_l_alpha_conjugate || r.in_l_half_conjugate;
  return r;
}

// ---------------------------------------------------------------------------

/// The vector (F(D_i)) over interior cells i in I^d_n, lexicographic.
struct NoiseRealization {
  GridSpec grid;
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  std::string backend;

  static NoiseRealization zero(GridSpec g) { return {g, std::vector<double>(g.interior_size(), 0.0), 0, 0, "zero"}; }
};

/// Coarse cell I is the union of fine cells m I + {0..m-1}^d.
inline NoiseRealization aggregate(const NoiseRealization& fine, int m) {
  if (m < 1 || fine.grid.n() % m != 0) throw ConfigError("aggregate: factor must divide the fine resolution");
  if (m == 1) return fine;
  const GridSpec coarse(fine.grid.d(), fine.grid.n() / m);
  NoiseRealization out{coarse, std::vector<double>(coarse.interior_size(), 0.0), fine.seed, fine.index, fine.backend};
  const int d = coarse.d();
  std::vector<int> sub(d), idx(d);
  for (std::size_t c = 0; c < out.values.size(); ++c) {
    const auto I = coarse.unravel(c);
    std::fill(sub.begin(), sub.end(), 0);
    double s = 0.0;
    for (;;) {
      for (int k = 0; k < d; ++k) idx[k] = m * I[k] + sub[k];
      s += fine.values[fine.grid.linear_index(idx)];
      int k = d - 1;
      while (k >= 0 && ++sub[k] == m) sub[k--] = 0;
      if (k < 0) break;
    }
    out.values[c] = s;
  }
  return out;
}

enum class SamplerBackend { automatic, cholesky, circulant };

inline constexpr std::size_t cholesky_cell_limit = 20000;

/// Exact sampler for the Gaussian vector with covariance (C(i - j)).
///
/// Cholesky: factor once, F = L z. Circulant: embed the stationary covariance
/// on a torus of period M = 2n per axis (4n if the first embedding has
/// eigenvalues below -1e-10 max), diagonalise by FFT; each complex draw gives
/// two independent realizations (real and imaginary parts), so sample 2p and
/// 2p + 1 share one transform.
class NoiseSampler {
 public:
  NoiseSampler(GridSpec grid, CorrelationModel model, SamplerBackend backend = SamplerBackend::automatic,
               int order = 16)
      : grid_(grid), model_(model), order_(order) {
    if (backend == SamplerBackend::automatic)
      backend = grid.interior_size() <= cholesky_cell_limit ? SamplerBackend::cholesky : SamplerBackend::circulant;
    table_ = std::make_shared<CovarianceTable>(grid, model, backend == SamplerBackend::circulant ? grid.n() : grid.n() - 1,
                                               order);
    if (backend == SamplerBackend::circulant && !setup_circulant()) {
      if (grid.interior_size() > cholesky_cell_limit)
        throw NumericalError("NoiseSampler: circulant embedding failed and the grid is too large for Cholesky");
      backend = SamplerBackend::cholesky;
    }
    if (backend == SamplerBackend::cholesky) setup_cholesky();
    backend_ = backend;
  }

  const GridSpec& grid() const noexcept { return grid_; }
  const CovarianceTable& table() const noexcept { return *table_; }
  SamplerBackend backend() const noexcept { return backend_; }
  std::string backend_name() const { return backend_ == SamplerBackend::cholesky ? "cholesky" : "circulant"; }
  /// Torus period per axis (circulant only).
  int embedding_period() const noexcept { return M_; }

  NoiseRealization sample(std::uint64_t seed, std::uint64_t index = 0) const {
    NoiseRealization r{grid_, {}, seed, index, backend_name()};
    r.values = backend_ == SamplerBackend::cholesky ? sample_cholesky(seed, index) : sample_circulant(seed, index);
    return r;
  }

 private:
  void setup_cholesky() {
    const std::size_t N = grid_.interior_size();
    if (N > cholesky_cell_limit) throw ConfigError("NoiseSampler: grid too large for the Cholesky backend");
    Eigen::MatrixXd C = table_->dense_matrix();
    const double trace = C.trace();
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(C);
    if (llt.info() == Eigen::Success) {
      factor_ = C.triangularView<Eigen::Lower>();
      return;
    }
    // semidefinite (or numerically indefinite) covariance: symmetric square root with clipping
    C = table_->dense_matrix();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin < -1e-10 * trace) throw NumericalError("NoiseSampler: covariance table is not positive semidefinite");
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    factor_ = es.eigenvectors() * root.asDiagonal();
  }

  bool try_embedding(int M) {
    const int d = grid_.d();
    std::size_t total = 1;
    for (int k = 0; k < d; ++k) total *= static_cast<std::size_t>(M);
    std::vector<std::complex<double>> c(total);
    std::vector<int> off(d);
    for (std::size_t lin = 0; lin < total; ++lin) {
      std::size_t rest = lin;
      for (int k = d - 1; k >= 0; --k) {
        const int j = static_cast<int>(rest % M);
        rest /= M;
        off[k] = std::min(j, M - j);
      }
      c[lin] = (*table_)(off);
    }
    fftw::dft_inplace(c.data(), d, M, FFTW_FORWARD);
    double lmax = 0.0, lmin = 0.0;
    for (const auto& v : c) {
      lmax = std::max(lmax, v.real());
      lmin = std::min(lmin, v.real());
    }
    if (lmin < -1e-10 * lmax) return false;
    const double inv = 1.0 / static_cast<double>(total);
    root_.resize(total);
    for (std::size_t i = 0; i < total; ++i) root_[i] = std::sqrt(std::max(0.0, c[i].real()) * inv);
    M_ = M;
    return true;
  }

  bool setup_circulant() {
    const int M = 2 * grid_.n();
    if (try_embedding(M)) return true;
    // doubled period needs offsets up to 2n
    table_ = std::make_shared<CovarianceTable>(grid_, model_, 2 * grid_.n(), order_);
    return try_embedding(2 * M);
  }

  std::vector<double> sample_cholesky(std::uint64_t seed, std::uint64_t index) const {
    auto rng = keyed_stream(seed, index, stream_tag::noise);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd w(factor_.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = z(rng);
    const Eigen::VectorXd f = factor_ * w;
    return std::vector<double>(f.data(), f.data() + f.size());
  }

  std::vector<double> sample_circulant(std::uint64_t seed, std::uint64_t index) const {
    const std::uint64_t pair = index / 2;
    const bool imag = index % 2 == 1;
    std::lock_guard lock(cache_mutex_);
    if (!cache_valid_ || cache_seed_ != seed || cache_pair_ != pair) {
      auto rng = keyed_stream(seed, pair, stream_tag::noise);
      std::normal_distribution<double> z(0.0, 1.0);
      const int d = grid_.d();
      std::vector<std::complex<double>> w(root_.size());
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double a = z(rng), b = z(rng);
        w[i] = root_[i] * std::complex<double>(a, b);
      }
      fftw::dft_inplace(w.data(), d, M_, FFTW_FORWARD);
      const std::size_t N = grid_.interior_size();
      const int m = grid_.extent();
      cache_re_.resize(N);
      cache_im_.resize(N);
      for (std::size_t lin = 0; lin < N; ++lin) {
        std::size_t rest = lin, torus = 0, stride = 1;
        for (int k = d - 1; k >= 0; --k) {
          torus += (rest % m) * stride;
          rest /= m;
          stride *= static_cast<std::size_t>(M_);
        }
        cache_re_[lin] = w[torus].real();
        cache_im_[lin] = w[torus].imag();
      }
      cache_valid_ = true;
      cache_seed_ = seed;
      cache_pair_ = pair;
    }
    return imag ? cache_im_ : cache_re_;
  }

  GridSpec grid_;
  CorrelationModel model_;
  int order_;
  std::shared_ptr<const CovarianceTable> table_;
  SamplerBackend backend_ = SamplerBackend::cholesky;
  Eigen::MatrixXd factor_;
  std::vector<double> root_;
  int M_ = 0;

  mutable std::mutex cache_mutex_;
  mutable bool cache_valid_ = false;
  mutable std::uint64_t cache_seed_ = 0, cache_pair_ = 0;
  mutable std::vector<double> cache_re_, cache_im_;
};

/// x -> int G_n(x,y) dF(y) at every interior lattice point: apply_green(n^d F).
inline LatticeField noise_integral_field(const NoiseRealization& noise, const KernelSpec& kernel) {
  if (!(noise.grid == kernel.grid())) throw ConfigError("noise_integral_field: grid mismatch");
  std::vector<double> v(noise.values);
  const double scale = std::pow(static_cast<double>(noise.grid.n()), noise.grid.d());
  for (double& x : v) x *= scale;
  return apply_green(kernel, LatticeField(noise.grid, std::move(v)));
}

/// sum_i G_n(x, i/n) F(D_i)
inline double integrate_kernel(const NoiseRealization& noise, const KernelSpec& kernel, std::span<const double> x) {
  return noise_integral_field(noise, kernel).evaluate(x);
}

}  // namespace lattice_spde
