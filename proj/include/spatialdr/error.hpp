#pragma once

#include <stdexcept>
#include <string>

namespace spatialdr {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  Config = 2,    // bad parameters, missing columns, invalid flags
  Data = 3,      // unreadable files, parse failures, invalid data
  Numerical = 4  // convergence failures, degenerate fits, extreme weights
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// Coordinate descent ran out of sweeps. `kkt_gap` is the largest KKT violation
/// at the last iterate, in the units of the tolerance test.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double kkt_gap)
      : NumericalError(what), kkt_gap_(kkt_gap) {}
  double kkt_gap() const noexcept { return kkt_gap_; }

 private:
  double kkt_gap_;
};

}  // namespace spatialdr
