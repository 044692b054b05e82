#pragma once

#include <stdexcept>
#include <string>

namespace gradsched {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unsupported instance text.
class ParseError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormat : public ParseError {
 public:
  using ParseError::ParseError;
};

// Arguments that violate a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered; the message names the offending component.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace gradsched
