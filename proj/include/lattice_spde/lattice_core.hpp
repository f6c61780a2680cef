#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "fftw.hpp"

// Uniform grids on the unit cube, the Dirichlet sine eigenbasis and the
// second-order difference operator A diagonalised by it.
//
// Interior arrays are stored row-major over I^d_n = {1,...,n-1}^d with the
// first index slowest (lexicographic order). Boundary values are zero and
// never stored.
namespace lattice_spde {

class GridSpec {
 public:
  GridSpec(int d, int n) : d_(d), n_(n) {
    if (d < 1) throw ConfigError("GridSpec: dimension must be >= 1");
    if (n < 2) throw ConfigError("GridSpec: resolution must be >= 2");
    size_ = 1;
    for (int k = 0; k < d; ++k) size_ *= static_cast<std::size_t>(n - 1);
  }

  int d() const noexcept { return d_; }
  int n() const noexcept { return n_; }
  /// Interior points per axis.
  int extent() const noexcept { return n_ - 1; }
  /// (n-1)^d
  std::size_t interior_size() const noexcept { return size_; }
  double cell_volume() const noexcept { return std::pow(static_cast<double>(n_), -d_); }

  bool is_interior(std::span<const int> i) const noexcept {
    if (static_cast<int>(i.size()) != d_) return false;
    for (int c : i)
      if (c < 1 || c > n_ - 1) return false;
    return true;
  }

  std::size_t linear_index(std::span<const int> i) const {
    if (!is_interior(i)) throw IndexError("GridSpec: index outside I^d_n");
    std::size_t lin = 0;
    for (int c : i) lin = lin * static_cast<std::size_t>(n_ - 1) + static_cast<std::size_t>(c - 1);
    return lin;
  }

  std::vector<int> unravel(std::size_t lin) const {
    std::vector<int> i(d_);
    for (int k = d_ - 1; k >= 0; --k) {
      i[k] = static_cast<int>(lin % static_cast<std::size_t>(n_ - 1)) + 1;
      lin /= static_cast<std::size_t>(n_ - 1);
    }
    return i;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  int d_;
  int n_;
  std::size_t size_;
};

class MultiIndex {
 public:
  MultiIndex(std::vector<int> components) : c_(std::move(components)) {
    for (int v : c_)
      if (v < 1) throw IndexError("MultiIndex: components must be positive");
  }
  MultiIndex(std::initializer_list<int> components) : MultiIndex(std::vector<int>(components)) {}

  std::size_t size() const noexcept { return c_.size(); }
  int operator[](std::size_t k) const noexcept { return c_[k]; }
  std::span<const int> components() const noexcept { return c_; }

  long long norm_squared() const noexcept {
    long long s = 0;
    for (int v : c_) s += static_cast<long long>(v) * v;
    return s;
  }

  bool in_lattice(const GridSpec& grid) const noexcept { return grid.is_interior(c_); }

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;

 private:
  std::vector<int> c_;
};

/// Step function u(x) = u(kappa_n(x)) on D, zero on boundary cells.
class LatticeField {
 public:
  explicit LatticeField(GridSpec grid) : grid_(grid), values_(grid.interior_size(), 0.0) {}
  LatticeField(GridSpec grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.interior_size()) throw ConfigError("LatticeField: value count does not match grid");
  }

  const GridSpec& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t lin) const noexcept { return values_[lin]; }
  double at(std::span<const int> i) const { return values_[grid_.linear_index(i)]; }

  /// Value of the step function at x in [0,1)^d; 0 when kappa_n(x) lies on the boundary.
  double evaluate(std::span<const double> x) const;

  /// Hilbert-Schmidt norm of the value array.
  double hs_norm() const noexcept {
    double s = 0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }
  /// L^2(D) norm of the step function: n^{-d/2} times the HS norm.
  double l2_norm() const noexcept { return hs_norm() * std::sqrt(grid_.cell_volume()); }

  double lp_norm(double p) const {
    if (!(p >= 1.0)) throw ConfigError("lp_norm: p must be >= 1");
    if (std::isinf(p)) return max_abs();
    double s = 0;
    for (double v : values_) s += std::pow(std::abs(v), p);
    return std::pow(s * grid_.cell_volume(), 1.0 / p);
  }

  double max_abs() const noexcept {
    double m = 0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Mutable access for builders; the field is otherwise treated as a value.
  std::vector<double>& mutable_values() noexcept { return values_; }

 private:
  GridSpec grid_;
  std::vector<double> values_;
};

/// Coefficients on the orthonormal basis (2/n)^{d/2} U_beta, indexed like a
/// LatticeField (beta in I^d_n, lexicographic).
class SpectralCoeffs {
 public:
  SpectralCoeffs(GridSpec grid, std::vector<double> coefficients) : grid_(grid), c_(std::move(coefficients)) {
    if (c_.size() != grid_.interior_size()) throw ConfigError("SpectralCoeffs: size does not match grid");
  }
  const GridSpec& grid() const noexcept { return grid_; }
  std::span<const double> coefficients() const noexcept { return c_; }
  double operator[](std::size_t lin) const noexcept { return c_[lin]; }
  double at(const MultiIndex& beta) const { return c_[grid_.linear_index(beta.components())]; }

 private:
  GridSpec grid_;
  std::vector<double> c_;
};

enum class TransformBackend { fftw, direct };

// ---------------------------------------------------------------------------

/// Cell index j with x in D_j = prod [j_k/n, (j_k+1)/n).
inline std::vector<int> kappa_n(std::span<const double> x, const GridSpec& grid) {
  if (static_cast<int>(x.size()) != grid.d()) throw DomainError("kappa_n: point dimension does not match grid");
  std::vector<int> j(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] >= 0.0 && x[k] < 1.0)) throw DomainError("kappa_n: coordinate outside [0,1)");
    j[k] = std::min(static_cast<int>(std::floor(x[k] * grid.n())), grid.n() - 1);
  }
  return j;
}

/// v_beta(x) = prod sin(beta_k pi x_k)
inline double sine_basis(const MultiIndex& beta, std::span<const double> x) {
  if (beta.size() != x.size()) throw DomainError("sine_basis: dimension mismatch");
  double v = 1.0;
  for (std::size_t k = 0; k < x.size(); ++k) v *= std::sin(beta[k] * std::numbers::pi * x[k]);
  return v;
}

/// One-axis eigenvalue -pi^2 l^2 c_l = -4 n^2 sin^2(l pi / 2n).
inline double axis_eigenvalue(int l, int n) noexcept {
  const double s = std::sin(l * std::numbers::pi / (2.0 * n));
  return -4.0 * static_cast<double>(n) * n * s * s;
}

/// c_l = sin^2(l pi/2n) / (l pi/2n)^2
inline double eigen_weight(int l, int n) noexcept {
  const double a = l * std::numbers::pi / (2.0 * n);
  const double s = std::sin(a);
  return s * s / (a * a);
}

inline double eigenvalue(const MultiIndex& beta, const GridSpec& grid) {
  if (!beta.in_lattice(grid)) throw IndexError("eigenvalue: beta outside I^d_n");
  double lam = 0.0;
  for (std::size_t k = 0; k < beta.size(); ++k) lam += axis_eigenvalue(beta[k], grid.n());
  return lam;
}

inline double LatticeField::evaluate(std::span<const double> x) const {
  const auto j = kappa_n(x, grid_);
  for (int c : j)
    if (c == 0) return 0.0;
  return values_[grid_.linear_index(j)];
}

/// U_beta: v_beta sampled at the interior lattice points.
inline LatticeField sampled_basis(const MultiIndex& beta, const GridSpec& grid) {
  if (!beta.in_lattice(grid)) throw IndexError("sampled_basis: beta outside I^d_n");
  LatticeField field(grid);
  auto& v = field.mutable_values();
  const int m = grid.extent();
  std::vector<std::vector<double>> axis(grid.d(), std::vector<double>(m));
  for (int k = 0; k < grid.d(); ++k)
    for (int i = 1; i <= m; ++i) axis[k][i - 1] = std::sin(beta[k] * std::numbers::pi * i / grid.n());
  for (std::size_t lin = 0; lin < v.size(); ++lin) {
    std::size_t rest = lin;
    double prod = 1.0;
    for (int k = grid.d() - 1; k >= 0; --k) {
      prod *= axis[k][rest % m];
      rest /= m;
    }
    v[lin] = prod;
  }
  return field;
}

namespace detail {

/// Applies the m x m matrix mat (row-major, out[k] = sum_j in[j] mat[j*m+k])
/// along one axis of a row-major cube of `rank` axes of length m.
inline void apply_along_axis(std::vector<double>& data, int rank, int m, int axis, std::span<const double> mat) {
  std::size_t stride = 1;
  for (int k = axis + 1; k < rank; ++k) stride *= m;
  const std::size_t block = stride * m;
  const std::size_t outer = data.size() / block;
  std::vector<double> line(m), out(m);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t t = 0; t < stride; ++t) {
      const std::size_t base = o * block + t;
      for (int j = 0; j < m; ++j) line[j] = data[base + j * stride];
      for (int k = 0; k < m; ++k) out[k] = 0.0;
      for (int j = 0; j < m; ++j) {
        const double a = line[j];
        const double* row = mat.data() + static_cast<std::size_t>(j) * m;
        for (int k = 0; k < m; ++k) out[k] += a * row[k];
      }
      for (int k = 0; k < m; ++k) data[base + k * stride] = out[k];
    }
  }
}

/// Orthonormal separable DST-I in place; the transform is an involution.
inline void orthonormal_dst(std::vector<double>& data, const GridSpec& grid, TransformBackend backend) {
  const int d = grid.d(), n = grid.n(), m = grid.extent();
  if (backend == TransformBackend::fftw) {
    fftw::dst1_inplace(data.data(), d, m);
    // FFTW's RODFT00 carries a factor 2 per axis; the basis carries sqrt(2/n).
    const double scale = std::pow(2.0 * n, -0.5 * d);
    for (double& v : data) v *= scale;
    return;
  }
  std::vector<double> mat(static_cast<std::size_t>(m) * m);
  const double norm = std::sqrt(2.0 / n);
  for (int j = 1; j <= m; ++j)
    for (int k = 1; k <= m; ++k) mat[(j - 1) * m + (k - 1)] = norm * std::sin(std::numbers::pi * j * k / n);
  for (int axis = 0; axis < d; ++axis) apply_along_axis(data, d, m, axis, mat);
}

}  // namespace detail

inline SpectralCoeffs to_spectral(const LatticeField& field, TransformBackend backend = TransformBackend::fftw) {
  std::vector<double> data(field.values().begin(), field.values().end());
  detail::orthonormal_dst(data, field.grid(), backend);
  return SpectralCoeffs(field.grid(), std::move(data));
}

inline LatticeField from_spectral(const SpectralCoeffs& coeffs, TransformBackend backend = TransformBackend::fftw) {
  std::vector<double> data(coeffs.coefficients().begin(), coeffs.coefficients().end());
  detail::orthonormal_dst(data, coeffs.grid(), backend);
  return LatticeField(coeffs.grid(), std::move(data));
}

/// All eigenvalues lambda_beta laid out like a LatticeField.
inline std::vector<double> eigenvalue_table(const GridSpec& grid) {
  const int m = grid.extent();
  std::vector<double> axis(m);
  for (int l = 1; l <= m; ++l) axis[l - 1] = axis_eigenvalue(l, grid.n());
  std::vector<double> out(grid.interior_size());
  for (std::size_t lin = 0; lin < out.size(); ++lin) {
    std::size_t rest = lin;
    double s = 0.0;
    for (int k = 0; k < grid.d(); ++k) {
      s += axis[rest % m];
      rest /= m;
    }
    out[lin] = s;
  }
  return out;
}

/// (Au)_i = sum_j n^2 [u_{i-e_j} - 2u_i + u_{i+e_j}] with zero boundary values.
inline LatticeField apply_A(const LatticeField& field) {
  const GridSpec& grid = field.grid();
  const int d = grid.d(), m = grid.extent();
  const double n2 = static_cast<double>(grid.n()) * grid.n();
  const auto u = field.values();
  std::vector<double> out(u.size(), 0.0);
  std::size_t stride = 1;
  for (int axis = d - 1; axis >= 0; --axis) {
    for (std::size_t lin = 0; lin < u.size(); ++lin) {
      const int pos = static_cast<int>((lin / stride) % m);
      const double left = pos > 0 ? u[lin - stride] : 0.0;
      const double right = pos < m - 1 ? u[lin + stride] : 0.0;
      out[lin] += n2 * (left - 2.0 * u[lin] + right);
    }
    stride *= m;
  }
  return LatticeField(grid, std::move(out));
}

}  // namespace lattice_spde
