#pragma once

#include <stdexcept>
#include <string>

namespace grassopt {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Matrix shapes do not agree with the point / objective they are used with.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated (non-tangent vector, foreign base point, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// A channelized p x p covariance failed its Cholesky factorization.
class SingularChannelError : public Error {
 public:
  using Error::Error;
};

// An n x n covariance could not be factorized; usually fixed by a larger nugget.
class CovarianceFactorError : public Error {
 public:
  using Error::Error;
};

class InsufficientSamplesError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Anything numerical that is not a contract problem: NaNs, solver failures.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace grassopt
