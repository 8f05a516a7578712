#pragma once

#include <stdexcept>
#include <string>

namespace sdr {

// Bad shapes, invalid hyperparameters, malformed config files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-range input data (files, sparse samples, empty sets).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf in a value or gradient, divergence, negative radicands.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (non-binary seed mask etc.).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace sdr
