#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <vector>

#include "lattice_spde/green_kernel.hpp"

using namespace lattice_spde;

namespace {

const double pi2 = std::numbers::pi * std::numbers::pi;

std::shared_ptr<const Mollifier> default_psi() {
  static const auto psi = std::make_shared<const Mollifier>(0.5);
  return psi;
}

LatticeField random_field(const GridSpec& grid, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  LatticeField f(grid);
  for (double& v : f.mutable_values()) v = z(rng);
  return f;
}

// Orthonormal sine matrix E[beta][i] = (2/n)^{d/2} prod sin(beta_k pi i_k / n), built from scratch.
Eigen::MatrixXd sine_matrix(const GridSpec& g) {
  const std::size_t N = g.interior_size();
  Eigen::MatrixXd E(N, N);
  for (std::size_t b = 0; b < N; ++b) {
    const auto beta = g.unravel(b);
    for (std::size_t i = 0; i < N; ++i) {
      const auto idx = g.unravel(i);
      double p = std::pow(2.0 / g.n(), 0.5 * g.d());
      for (int k = 0; k < g.d(); ++k) p *= std::sin(beta[k] * std::numbers::pi * idx[k] / g.n());
      E(b, i) = p;
    }
  }
  return E;
}

// Finite-difference Dirichlet Laplacian n^2 (sum of second differences) as a dense matrix.
Eigen::MatrixXd laplacian_matrix(const GridSpec& g) {
  const std::size_t N = g.interior_size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  const double n2 = static_cast<double>(g.n()) * g.n();
  for (std::size_t i = 0; i < N; ++i) {
    const auto idx = g.unravel(i);
    A(i, i) = -2.0 * g.d() * n2;
    for (int k = 0; k < g.d(); ++k)
      for (int s : {-1, 1}) {
        auto nb = idx;
        nb[k] += s;
        if (g.is_interior(nb)) A(i, g.linear_index(nb)) = n2;
      }
  }
  return A;
}

// Dense A^eps = E^T diag(lambda / Psi_hat) E with lambda read off E A E^T.
Eigen::MatrixXd smoothed_operator(const GridSpec& g, double eps, const Mollifier& psi) {
  const Eigen::MatrixXd E = sine_matrix(g);
  const Eigen::MatrixXd D = E * laplacian_matrix(g) * E.transpose();
  Eigen::VectorXd diag(g.interior_size());
  for (std::size_t b = 0; b < g.interior_size(); ++b)
    diag[b] = D(b, b) / psi.big_psi_hat(eps, MultiIndex(g.unravel(b)));
  return E.transpose() * diag.asDiagonal() * E;
}

}  // namespace

TEST(Coefficients, Examples) {
  const Mollifier& psi = *default_psi();
  EXPECT_NEAR(smoothed_coefficient(MultiIndex{1, 1, 1, 1}, 0.0, psi), -16.0 / (4.0 * pi2), 1e-14);
  EXPECT_NEAR(smoothed_coefficient(MultiIndex{1, 1, 1, 1}, 0.0, psi), -0.40528, 1e-5);
  EXPECT_NEAR(discrete_coefficient(MultiIndex{1, 1, 1, 1}, 0.0, GridSpec(4, 2), psi), -0.5, 1e-13);
  EXPECT_THROW(discrete_coefficient(MultiIndex{1, 2}, 0.1, GridSpec(2, 2), psi), IndexError);
}

TEST(Coefficients, SignAndBoundsOnLattice) {
  const Mollifier& psi = *default_psi();
  for (int n : {3, 6}) {
    const GridSpec g(4, n);
    for (double eps : {0.0, 0.2, 0.7}) {
      for (std::size_t lin = 0; lin < g.interior_size(); ++lin) {
        const MultiIndex b(g.unravel(lin));
        const double b2 = static_cast<double>(b.norm_squared());
        const double s = smoothed_coefficient(b, eps, psi);
        const double c = discrete_coefficient(b, eps, g, psi);
        EXPECT_LE(s, 0.0);
        EXPECT_LE(c, 0.0);
        EXPECT_LE(std::abs(s), 16.0 / (pi2 * b2) * (1 + 1e-12));
        EXPECT_LE(std::abs(c), 16.0 / (4.0 * b2) * (1 + 1e-12));
        if (s != 0.0) {
          const double ratio = c / s;
          EXPECT_GE(ratio, 1.0 - 1e-12);
          EXPECT_LE(ratio, pi2 / 4.0 + 1e-12);
        }
      }
    }
  }
}

TEST(Coefficients, DiscreteConvergesToSeriesAtFixedBeta) {
  const Mollifier& psi = *default_psi();
  const MultiIndex b{1, 2, 1, 3};
  double prev = 1.0;
  for (int n : {4, 8, 16, 32, 64}) {
    const double err = std::abs(discrete_coefficient(b, 0.1, GridSpec(4, n), psi) / smoothed_coefficient(b, 0.1, psi) - 1.0);
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 1e-2);
}

TEST(Coefficients, UnderflowGuardZeroesCoefficients) {
  const Mollifier& psi = *default_psi();
  const MultiIndex b(std::vector<int>(10, 10000));
  ASSERT_LT(psi.big_psi_hat(1.0, b), underflow_guard);
  EXPECT_EQ(smoothed_coefficient(b, 1.0, psi), 0.0);
  EXPECT_EQ(discrete_coefficient(b, 1.0, GridSpec(10, 10001), psi), 0.0);
}

TEST(Bounds, SineBasisLipschitz) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> bi(1, 20);
  for (int t = 0; t < 5000; ++t) {
    const MultiIndex b{bi(rng), bi(rng), bi(rng), bi(rng)};
    std::vector<double> x(4), z(4);
    double dist = 0.0;
    for (int k = 0; k < 4; ++k) {
      x[k] = u(rng);
      z[k] = x[k] + 0.05 * (u(rng) - 0.5);
      dist += (x[k] - z[k]) * (x[k] - z[k]);
    }
    const double lhs = std::abs(sine_basis(b, x) - sine_basis(b, z));
    EXPECT_LE(lhs, std::sqrt(static_cast<double>(b.norm_squared())) * std::sqrt(dist) * std::numbers::pi + 1e-14);
  }
}

TEST(Bounds, InverseEigenvalueCloseToContinuum) {
  for (int n = 2; n <= 16; ++n) {
    const GridSpec g(4, n);
    double worst = 0.0;
    for (std::size_t lin = 0; lin < g.interior_size(); ++lin) {
      const MultiIndex b(g.unravel(lin));
      const double b2 = static_cast<double>(b.norm_squared());
      const double diff = std::abs(-1.0 / (pi2 * b2) - 1.0 / eigenvalue(b, g));
      worst = std::max(worst, diff * std::sqrt(b2) * n);
    }
    EXPECT_LE(worst, 1.0) << "n=" << n;
  }
}

TEST(KernelSpec, Validation) {
  EXPECT_THROW(KernelSpec::series(GridSpec(2, 8), 0.1, default_psi(), 4), ConfigError);
  EXPECT_THROW(KernelSpec::lattice(GridSpec(2, 8), -0.1, default_psi()), ConfigError);
  EXPECT_THROW(KernelSpec::lattice(GridSpec(2, 8), 0.1, nullptr), ConfigError);
  const auto k = KernelSpec::lattice(GridSpec(2, 8), 0.1, default_psi());
  EXPECT_THROW(apply_green(k, LatticeField(GridSpec(2, 6))), ConfigError);
  EXPECT_THROW(apply_green(KernelSpec::series(GridSpec(2, 8), 0.1, default_psi(), 16), LatticeField(GridSpec(2, 8))),
               ConfigError);
}

TEST(ApplyGreen, ZeroAndEigenAction) {
  const GridSpec g(3, 6);
  const auto k = KernelSpec::lattice(g, 0.3, default_psi());
  const LatticeField zero = apply_green(k, LatticeField(g));
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  for (const MultiIndex& b : {MultiIndex{1, 1, 1}, MultiIndex{2, 5, 3}, MultiIndex{5, 5, 5}}) {
    const LatticeField u = sampled_basis(b, g);
    const LatticeField gu = apply_green(k, u);
    // factor Psi_hat / lambda = discrete_coefficient * 2^{-d}
    const double factor = discrete_coefficient(b, 0.3, g, *default_psi()) / 8.0;
    for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(gu[i], factor * u[i], 1e-13 * std::abs(factor));
  }
}

TEST(ApplyGreen, MatchesDenseSmoothedInverse) {
  for (auto [d, n] : {std::pair{2, 4}, std::pair{4, 3}, std::pair{2, 7}}) {
    const GridSpec g(d, n);
    const double eps = 0.35;
    const Eigen::MatrixXd Aeps = smoothed_operator(g, eps, *default_psi());
    const auto k = KernelSpec::lattice(g, eps, default_psi());
    for (unsigned s = 0; s < 3; ++s) {
      const LatticeField h = random_field(g, s);
      const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(h.values().data(), h.size());
      const Eigen::VectorXd ref = Aeps.partialPivLu().solve(rhs);
      const LatticeField got = apply_green(k, h);
      const double scale = ref.cwiseAbs().maxCoeff();
      for (std::size_t i = 0; i < h.size(); ++i) EXPECT_LE(std::abs(got[i] - ref[i]), 1e-10 * scale);
    }
  }
}

TEST(EvalKernel, SymmetryAndBoundary) {
  const GridSpec g(2, 6);
  const auto lat = KernelSpec::lattice(g, 0.2, default_psi());
  const auto ser = KernelSpec::series(g, 0.2, default_psi(), 24);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 30; ++t) {
    const std::vector<double> x{u(rng), u(rng)}, y{u(rng), u(rng)};
    for (const auto* k : {&lat, &ser}) {
      const double a = eval_kernel(*k, x, y), b = eval_kernel(*k, y, x);
      EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(a)));
    }
  }
  const std::vector<double> y{0.4, 0.55};
  EXPECT_EQ(eval_kernel(lat, std::vector<double>{0.0, 0.5}, y), 0.0);
  EXPECT_EQ(eval_kernel(lat, std::vector<double>{0.1, 0.5}, y), 0.0);  // kappa_n = 0 is a boundary cell
  EXPECT_NEAR(eval_kernel(ser, std::vector<double>{0.0, 0.5}, y), 0.0, 1e-14);
  EXPECT_NEAR(eval_kernel(ser, std::vector<double>{0.3, 1.0}, y), 0.0, 1e-12);
}

TEST(EvalKernel, LatticeKernelIsScaledDenseInverse) {
  const GridSpec g(2, 4);
  const double eps = 0.25;
  const Eigen::MatrixXd inv = smoothed_operator(g, eps, *default_psi()).inverse();
  const auto k = KernelSpec::lattice(g, eps, default_psi());
  for (std::size_t i = 0; i < g.interior_size(); ++i)
    for (std::size_t j = 0; j < g.interior_size(); ++j) {
      const auto a = g.unravel(i), b = g.unravel(j);
      const std::vector<double> x{(a[0] + 0.3) / 4.0, (a[1] + 0.7) / 4.0}, y{(b[0] + 0.5) / 4.0, (b[1] + 0.1) / 4.0};
      EXPECT_NEAR(eval_kernel(k, x, y), 16.0 * inv(i, j), 1e-12 * 16.0 * inv.cwiseAbs().maxCoeff());
    }
}

TEST(KernelNorm, ParsevalMatchesCellSum) {
  const GridSpec g(2, 6);
  const auto k = KernelSpec::lattice(g, 0.3, default_psi());
  for (const std::vector<double>& x : {std::vector<double>{0.5, 0.5}, std::vector<double>{0.2, 0.9}}) {
    double s = 0.0;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        const double v = eval_kernel(k, x, std::vector<double>{(i + 0.5) / 6, (j + 0.5) / 6});
        s += v * v / 36.0;
      }
    EXPECT_NEAR(l2_norm_in_y(k, x), std::sqrt(s), 1e-13);
    EXPECT_GT(l2_norm_in_y(k, x), 0.0);
  }
  const auto pts = sample_points(2, 10, 3);
  const auto rep = sup_l2_norm(k, pts, 1);
  ASSERT_EQ(rep.norms.size(), 10u);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_DOUBLE_EQ(rep.norms[i], l2_norm_in_y(k, pts[i]));
  EXPECT_DOUBLE_EQ(rep.sup, *std::max_element(rep.norms.begin(), rep.norms.end()));
  EXPECT_EQ(sup_l2_norm(k, pts, 3).norms, rep.norms);
}

TEST(KernelNorm, SeriesNormMatchesQuadrature) {
  const GridSpec g(1, 4);
  const auto k = KernelSpec::series(g, 0.1, default_psi(), 40);
  const std::vector<double> x{0.37};
  const double q = integrate_gauss(
      [&](double y) {
        const double v = eval_kernel(k, x, std::vector<double>{y});
        return v * v;
      },
      0.0, 1.0, 200);
  EXPECT_NEAR(l2_norm_in_y(k, x), std::sqrt(q), 1e-10);
}

TEST(KernelNorm, MonotoneInEps) {
  const GridSpec g(4, 8);
  const auto pts = sample_points(4, 8, 2);
  for (const auto& x : pts) {
    double prev = 0.0;
    for (double eps : {0.8, 0.4, 0.2, 0.1}) {
      const double v = l2_norm_in_y(KernelSpec::lattice(g, eps, default_psi()), x);
      if (v > 0.0) {
        EXPECT_GE(v, prev * (1 - 1e-12));
      }
      prev = v;
    }
  }
}

// The lattice kernel sees x only through kappa_n(x), so the sup over x is a
// max over cells. By the reflection symmetry of the cube it suffices to scan
// sorted cell indices up to n/2.
TEST(KernelNorm, BoundedAlongEpsilonScheduleOverAllCells) {
  auto cell_sup = [](int n) {
    const auto k = KernelSpec::lattice(GridSpec(4, n), epsilon_of_n(n, 8.0, 4), default_psi());
    std::vector<std::vector<double>> pts;
    const int h = n / 2;
    for (int a = 1; a <= h; ++a)
      for (int b = a; b <= h; ++b)
        for (int c = b; c <= h; ++c)
          for (int e = c; e <= h; ++e) pts.push_back({(a + 0.5) / n, (b + 0.5) / n, (c + 0.5) / n, (e + 0.5) / n});
    return sup_l2_norm(k, pts).sup;
  };
  const double c8 = cell_sup(8), c16 = cell_sup(16);
  EXPECT_GT(c8, 0.0);
  EXPECT_LE(c16, 1.10 * c8);
  EXPECT_GE(kernel_constant(4, 8, 8.0, default_psi(), 64, 1), 0.0);
  EXPECT_LE(kernel_constant(4, 8, 8.0, default_psi(), 64, 1), c8 * (1 + 1e-12));
}

TEST(SeriesEvaluator, MatchesDirectSummation) {
  const Mollifier& psi = *default_psi();
  const double eps = 0.25;
  const int N = static_cast<int>(std::ceil(psi.frequency_cutoff(1e-14) / eps)) + 2;
  const auto direct = KernelSpec::series(GridSpec(2, 2), eps, default_psi(), N);
  const SeriesKernelEvaluator fast(2, eps, psi);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 25; ++t) {
    const std::vector<double> x{u(rng), u(rng)};
    std::vector<double> y{u(rng), u(rng)};
    if (t % 5 == 0) y = x;  // diagonal, where the kernel peaks
    const double ref = eval_kernel(direct, x, y);
    EXPECT_NEAR(fast(x, y), ref, 1e-8 * std::max(1.0, std::abs(ref)));
  }
}

TEST(SmoothingRate, ValidationAndDegenerateCases) {
  const Mollifier& psi = *default_psi();
  const std::vector<double> two{0.4, 0.2};
  EXPECT_THROW(smoothing_error_rate(2, two, 1.2, psi, 1000), ConfigError);
  const SeriesKernelEvaluator g(2, 0.2, psi);
  const auto [norm, se] = kernel_difference_norm(g, g, 0.03, 1.2, 5000, 1, 1);
  EXPECT_EQ(norm, 0.0);
  EXPECT_EQ(se, 0.0);
}

TEST(SmoothingRate, ProxyDecreasesWithPositiveSlope) {
  const Mollifier& psi = *default_psi();
  const std::vector<double> eps{0.4, 0.2, 0.1};
  const auto r = smoothing_error_rate(2, eps, 1.2, psi, 20000, 4);
  ASSERT_EQ(r.proxy.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_GT(r.proxy[i], 0.0);
    EXPECT_LT(r.stderr_[i], 0.1 * r.proxy[i]);
  }
  EXPECT_GT(r.proxy[0], r.proxy[1]);
  EXPECT_GT(r.proxy[1], r.proxy[2]);
  EXPECT_GT(r.fit.slope, 0.5);
  // same seed, different thread count: identical numbers
  const auto again = smoothing_error_rate(2, eps, 1.2, psi, 20000, 4, 3);
  EXPECT_EQ(again.proxy, r.proxy);
}

TEST(Truncation, RateExponent) {
  EXPECT_NEAR(truncation_rate_exponent(0.8, 12.0, 4), 0.8 * 8.0 / 12.0, 1e-15);
  EXPECT_NEAR(truncation_rate_exponent(0.8, 12.0, 4), 0.5333, 1e-4);
}

TEST(Truncation, MatchesBruteForceQuadratureInY) {
  const GridSpec g(2, 4);
  const double eps = 0.3;
  const int N = 16;
  const auto lat = KernelSpec::lattice(g, eps, default_psi());
  const auto ser = KernelSpec::series(g, eps, default_psi(), N);
  const auto pts = sample_points(2, 3, 8);
  const auto rep = truncation_error_norm(g, eps, N, default_psi(), pts, 1);
  const GaussRule& rule = gauss_legendre(12);
  for (std::size_t p = 0; p < pts.size(); ++p) {
    double s = 0.0;
    for (int ci = 0; ci < 4; ++ci)
      for (int cj = 0; cj < 4; ++cj)
        for (int a = 0; a < 12; ++a)
          for (int b = 0; b < 12; ++b) {
            const std::vector<double> y{(ci + 0.5 + 0.5 * rule.nodes[a]) / 4, (cj + 0.5 + 0.5 * rule.nodes[b]) / 4};
            const double v = eval_kernel(ser, pts[p], y) - eval_kernel(lat, pts[p], y);
            s += v * v * rule.weights[a] * rule.weights[b] / 64.0;
          }
    EXPECT_NEAR(rep.errors[p], std::sqrt(s), 1e-8 * std::sqrt(s) + 1e-12);
  }
}

TEST(Truncation, ValidationAndStructure) {
  const GridSpec g(2, 8);
  const auto pts = sample_points(2, 4, 1);
  EXPECT_THROW(truncation_error_norm(g, 0.2, 4, default_psi(), pts), ConfigError);
  const auto same = truncation_error_norm(g, 0.2, 8, default_psi(), pts);
  for (double e : same.errors) EXPECT_GT(e, 0.0);  // only the kappa_n part remains
}

TEST(Truncation, DecreasesAsResolutionDoubles) {
  const auto pts = sample_points(4, 64, 1);
  double prev = 1e300;
  for (int n : {4, 8, 16}) {
    const GridSpec g(4, n);
    const auto rep = truncation_error_norm(g, epsilon_of_n(n, 12.0, 4), 4 * n, default_psi(), pts);
    EXPECT_LT(rep.sup, prev);
    prev = rep.sup;
  }
}
