#pragma once

#include <stdexcept>
#include <string>

namespace cdisent {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or container sizes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or a value outside an operation's domain.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported files and configs.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdisent
