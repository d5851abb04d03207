#pragma once

#include <stdexcept>
#include <string>

namespace lumpvol {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violations on user-supplied data (bad degree, bad index, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NonZeroMean : public Error {
 public:
  using Error::Error;
};

class SingularField : public Error {
 public:
  using Error::Error;
};

class DegenerateTuple : public Error {
 public:
  using Error::Error;
};

class NonHermitian : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class BradlowViolation : public DomainError {
 public:
  using DomainError::DomainError;
};

class InvalidGenusDegree : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, double last_residual, int iterations)
      : Error(what), last_residual_(last_residual), iterations_(iterations) {}
  double last_residual() const { return last_residual_; }
  int iterations() const { return iterations_; }

 private:
  double last_residual_;
  int iterations_;
};

}  // namespace lumpvol
