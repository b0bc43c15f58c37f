#pragma once

#include <stdexcept>
#include <string>

namespace cbe {

// Every engine failure derives from Error so callers (the CLI in particular)
// can map the whole family onto one exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed container bytes: bad magic, truncated payload, bad header.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input whose content violates an invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

// Two inputs that should line up (rows vs records, concepts vs text rows) do not.
class BindError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericsError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace cbe
