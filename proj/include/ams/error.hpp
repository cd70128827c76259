#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ams {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (levels outside
/// an oracle's support, probabilities outside (0,1), ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration. Maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A state produced a NaN/infinite score or density.
class InvalidStateError : public Error {
 public:
  using Error::Error;
};

/// Requested capability (e.g. exact conditional sampling) is not provided.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class InsufficientSampleError : public Error {
 public:
  using Error::Error;
};

/// The finite-chain semigroup has a vanishing normalization.
class DegenerateChainError : public Error {
 public:
  using Error::Error;
};

/// Adaptive run hit max_iterations before its quantile reached the target.
/// Carries the realized level history for diagnosis of stalled chains.
class NonTerminationError : public Error {
 public:
  NonTerminationError(const std::string& what, std::vector<double> levels)
      : Error(what), level_history_(std::move(levels)) {}

  const std::vector<double>& level_history() const noexcept { return level_history_; }

 private:
  std::vector<double> level_history_;
};

}  // namespace ams
