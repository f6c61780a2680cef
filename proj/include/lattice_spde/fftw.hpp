#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "errors.hpp"

// Thin wrapper over FFTW: plans are created once per shape under a mutex
// (the FFTW planner is not thread-safe) and executed through the new-array
// interface, which is.
namespace lattice_spde::fftw {

namespace detail {

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

using PlanKey = std::tuple<int, int, int, int>;  // kind, rank, extent, sign

inline std::map<PlanKey, fftw_plan>& plan_cache() {
  static std::map<PlanKey, fftw_plan> cache;
  return cache;
}

constexpr unsigned plan_flags = FFTW_ESTIMATE | FFTW_UNALIGNED;

inline std::size_t volume(int rank, int extent) {
  std::size_t v = 1;
  for (int i = 0; i < rank; ++i) v *= static_cast<std::size_t>(extent);
  return v;
}

inline fftw_plan r2r_plan(int kind_tag, fftw_r2r_kind kind, int rank, int extent) {
  std::lock_guard lock(planner_mutex());
  auto& slot = plan_cache()[{kind_tag, rank, extent, 0}];
  if (!slot) {
    std::vector<int> dims(rank, extent);
    std::vector<fftw_r2r_kind> kinds(rank, kind);
    double* buf = fftw_alloc_real(volume(rank, extent));
    slot = fftw_plan_r2r(rank, dims.data(), buf, buf, kinds.data(), plan_flags);
    fftw_free(buf);
    if (!slot) throw NumericalError("fftw: r2r planning failed");
  }
  return slot;
}

}  // namespace detail

/// In-place unnormalized multi-dimensional DST-I (FFTW RODFT00) on a
/// row-major cube with `rank` axes of length `extent`:
///   Y_k = prod 2 * sum_j X_j sin(pi (j+1)(k+1) / (extent+1)).
inline void dst1_inplace(double* data, int rank, int extent) {
  fftw_execute_r2r(detail::r2r_plan(1, FFTW_RODFT00, rank, extent), data, data);
}

/// In-place unnormalized DCT-I (FFTW REDFT00) of a 1-D array of `length` >= 2:
///   Y_k = X_0 + (-1)^k X_{N-1} + 2 sum_{j=1}^{N-2} X_j cos(pi j k / (N-1)).
inline void dct1_inplace(double* data, int length) {
  fftw_execute_r2r(detail::r2r_plan(2, FFTW_REDFT00, 1, length), data, data);
}

/// In-place unnormalized complex DFT on a row-major cube; sign is FFTW_FORWARD or FFTW_BACKWARD.
inline void dft_inplace(std::complex<double>* data, int rank, int extent, int sign) {
  fftw_plan plan;
  {
    std::lock_guard lock(detail::planner_mutex());
    auto& slot = detail::plan_cache()[{3, rank, extent, sign}];
    if (!slot) {
      std::vector<int> dims(rank, extent);
      fftw_complex* buf = fftw_alloc_complex(detail::volume(rank, extent));
      slot = fftw_plan_dft(rank, dims.data(), buf, buf, sign, detail::plan_flags);
      fftw_free(buf);
      if (!slot) throw NumericalError("fftw: dft planning failed");
    }
    plan = slot;
  }
  auto* p = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(plan, p, p);
}

}  // namespace lattice_spde::fftw
