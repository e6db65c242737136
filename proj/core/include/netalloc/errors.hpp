#pragma once

#include <stdexcept>
#include <string>

namespace netalloc {

/// Malformed or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data that cannot be used: missing files, bad rows, broken graphs.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Factorization failures, non-finite likelihoods, solver non-convergence.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace netalloc
