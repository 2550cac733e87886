#pragma once

#include <stdexcept>
#include <string>

namespace qamatch {

/// Input data violates a documented file format or dialogue invariant.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Command line or configuration misuse.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numeric failure during training (non-finite loss).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qamatch
