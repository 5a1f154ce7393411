#pragma once

#include <stdexcept>
#include <string>

namespace cflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value or derivative evaluated to NaN or infinity.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// |J| fell below the admissibility threshold, or the metric is singular.
class DegenerateFlowError : public Error {
 public:
  using Error::Error;
};

/// Evaluation outside the extents of a sampled field or integrated flow.
class OutOfDomainError : public Error {
 public:
  using Error::Error;
};

/// A trajectory left the bounding box during flow integration.
class BlowUpError : public Error {
 public:
  using Error::Error;
};

/// Malformed scenario configuration. Carries the offending field path and,
/// when known, the 1-based line in the config file.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& message, int line = 0)
      : Error(format(field, message, line)), field_(field), line_(line) {}

  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  static std::string format(const std::string& field, const std::string& message, int line) {
    std::string s;
    if (line > 0) s += "line " + std::to_string(line) + ": ";
    if (!field.empty()) s += field + ": ";
    return s + message;
  }

  std::string field_;
  int line_;
};

/// Admissibility cutoff for the Jacobian determinant.
inline constexpr double kDegenerateJacobian = 1e-12;

}  // namespace cflow
