#pragma once

#include <stdexcept>
#include <string>

namespace invreg {

/// Malformed input: bad shapes, bad config keys, missing files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numeric precondition failed (non-PD covariance, singular matrix,
/// zero-variance correlation input, ...).
class NumericDomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No loss threshold separates successful from failed registrations.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace invreg
