#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace nj {

// Base of every library failure. exit_code() is what the CLI returns.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ParameterError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// Non-finite input handed to a pointwise evaluator.
class DomainError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }
  int exit_code() const noexcept override { return 2; }

 private:
  std::size_t offset_;
};

class HypothesisError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual, int iterations)
      : Error(what + " (residual " + std::to_string(residual) + " after " +
              std::to_string(iterations) + " iterations)"),
        residual_(residual),
        iterations_(iterations) {}
  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }
  int exit_code() const noexcept override { return 3; }

 private:
  double residual_;
  int iterations_;
};

// Energy became NaN or infinite during descent.
class DivergenceError : public ConvergenceError {
 public:
  explicit DivergenceError(int iteration)
      : ConvergenceError("energy diverged at iteration " + std::to_string(iteration),
                         std::numeric_limits<double>::quiet_NaN(), iteration) {}
};

class ConstructionError : public Error {
 public:
  ConstructionError(const std::string& what, int index = -1)
      : Error(index >= 0 ? what + " (index j=" + std::to_string(index) + ")" : what),
        index_(index) {}
  int index() const noexcept { return index_; }
  int exit_code() const noexcept override { return 4; }

 private:
  int index_;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 5; }
};

}  // namespace nj
