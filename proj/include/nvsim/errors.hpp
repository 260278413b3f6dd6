#pragma once

#include <stdexcept>
#include <string>

namespace nvsim {

// Base of everything thrown by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Raised when a perturbative formula is evaluated too close to the
// ground-state level anticrossing.
class OutOfValidityDomain : public Error {
 public:
  using Error::Error;
};

class AmbiguousTransition : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class RankDeficiency : public Error {
 public:
  using Error::Error;
};

class FlatData : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace nvsim
