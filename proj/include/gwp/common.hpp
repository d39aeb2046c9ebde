#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace gwp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr const char* kVersion = "0.3.0";

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or precondition violation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A matrix could not be factorized even after jitter escalation.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// A sampler was asked to move from a state with non-finite density.
class InvalidStateError : public Error {
 public:
  using Error::Error;
};

/// A statistic is undefined for the given input (zero variance, all-zero weights).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Ordered list of symmetric matrices indexed by input locations.
struct CovariancePath {
  Vector x;
  std::vector<Matrix> sigma;

  [[nodiscard]] std::size_t size() const { return sigma.size(); }
  [[nodiscard]] Eigen::Index dim() const { return sigma.empty() ? 0 : sigma.front().rows(); }
};

/// Entrywise average of several aligned paths.
CovariancePath mean_path(const std::vector<CovariancePath>& draws);

}  // namespace gwp
