#pragma once

#include <stdexcept>
#include <string>

namespace hacbsr {

/// Base for every error raised by the library. The CLI maps subclasses to
/// exit codes (argument 2, I/O 3, divergence 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A value is outside its parameter domain (e.g. non-positive-definite covariance).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Dense storage guard exceeded.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class ConfigurationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Raised when a system matrix is not (numerically) positive definite.
class ConditioningError : public Error {
 public:
  ConditioningError(const std::string& what, double lambda_min)
      : Error(what + " (lambda_min = " + std::to_string(lambda_min) + ")"),
        lambda_min_(lambda_min) {}
  double lambda_min() const noexcept { return lambda_min_; }

 private:
  double lambda_min_;
};

/// A training loss became non-finite or exceeded the divergence threshold.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long iteration)
      : Error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

}  // namespace hacbsr
