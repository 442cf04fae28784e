#pragma once

#include <stdexcept>
#include <string>

namespace skel {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not match the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A matrix that must be inverted is singular or numerically close to it.
class SingularityError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of the call was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Non-finite values encountered during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace skel
