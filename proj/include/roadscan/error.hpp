#pragma once

#include <stdexcept>
#include <string>

namespace roadscan {

/// Base of every error raised by the library. Callers that only need to
/// distinguish "bad input" from programming errors can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A box whose area is zero (or negative) after construction or clipping.
class DegenerateBox : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class UnknownClass : public Error {
 public:
  using Error::Error;
};

class UnknownView : public Error {
 public:
  using Error::Error;
};

class ConfidenceOutOfRange : public Error {
 public:
  using Error::Error;
};

class MissingCountry : public Error {
 public:
  using Error::Error;
};

class MalformedExif : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace roadscan
