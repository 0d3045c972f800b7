#pragma once

#include <stdexcept>
#include <string>

namespace fbttr {

// Base of every exception the library throws. The subclasses map onto the
// CLI exit codes (config 2, protocol 3, data 4); everything else is a
// programming or numerical failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace fbttr
