#pragma once

#include <stdexcept>
#include <string>

namespace stpasec {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or missing configuration, unreadable input file, unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A documented operation precondition did not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace stpasec
