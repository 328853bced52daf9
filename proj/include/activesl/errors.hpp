#pragma once

#include <stdexcept>
#include <string>

namespace activesl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A power or logarithm of a non-positive quantity was requested, or the
/// law produced a non-finite value.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input: bad file contents, dimension mismatch, out-of-range values.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The basin mixture could not be formed from the supplied fits.
class PosteriorError : public Error {
 public:
  using Error::Error;
};

}  // namespace activesl
