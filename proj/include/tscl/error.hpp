#pragma once

#include <stdexcept>
#include <string>

namespace tscl {

// Error kinds map one-to-one onto CLI exit codes (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

// Divergence, non-finite loss, representation collapse.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline int exit_code(const Error& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const CorruptionError*>(&e))
    return 2;
  return 1;
}

#define TSCL_REQUIRE(cond, ErrType, msg) \
  do {                                   \
    if (!(cond)) throw ErrType(msg);     \
  } while (0)

}  // namespace tscl
