#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace otmpc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the domain of an operation (shape mismatch, non-SPD, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Sinkhorn could not produce a coupling (kernel underflow, non-finite iterate).
class SolverFailure : public Error {
 public:
  SolverFailure(const std::string& what, double epsilon)
      : Error(what + " (epsilon = " + std::to_string(epsilon) + ")"),
        epsilon_(epsilon) {}
  double epsilon() const noexcept { return epsilon_; }

 private:
  double epsilon_;
};

/// A coupling row carries (numerically) no mass.
class DegenerateCoupling : public Error {
 public:
  explicit DegenerateCoupling(std::size_t row)
      : Error("coupling row " + std::to_string(row) + " has zero mass"),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Circular mean requested for a vanishing resultant.
class UndefinedMean : public Error {
 public:
  using Error::Error;
};

/// Matrix logarithm on SO(3) at a rotation angle too close to pi.
class BranchAmbiguity : public Error {
 public:
  using Error::Error;
};

/// SPD matrix with an eigenvalue too close to zero.
class NearSingular : public Error {
 public:
  using Error::Error;
};

/// Dynamics produced a non-finite state.
class EnvironmentFault : public Error {
 public:
  EnvironmentFault(const std::string& what, int timestep)
      : Error(what + " at timestep " + std::to_string(timestep)),
        timestep_(timestep) {}
  int timestep() const noexcept { return timestep_; }

 private:
  int timestep_;
};

/// Obstacle-field rejection sampling ran out of attempts.
class GenerationError : public Error {
 public:
  GenerationError(const std::string& what, unsigned long long seed)
      : Error(what + " (seed " + std::to_string(seed) + ")"), seed_(seed) {}
  unsigned long long seed() const noexcept { return seed_; }

 private:
  unsigned long long seed_;
};

}  // namespace otmpc
