#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lattice_spde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point or argument outside the admissible domain (e.g. x outside [0,1)^d).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A multi-index outside the interior index set of a grid.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters: violated gates, inconsistent grids, bad ladders.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A correlation model that cannot produce a valid covariance.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (non-PSD covariance, embedding failure, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Fixed-point iteration ran out of iterations.
class NonConvergenceError : public NumericalError {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> history)
      : NumericalError(what), residual_history_(std::move(history)) {}

  const std::vector<double>& residual_history() const noexcept { return residual_history_; }

 private:
  std::vector<double> residual_history_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lattice_spde
