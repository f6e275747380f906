#pragma once

#include <stdexcept>
#include <string>

namespace dustbin {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// A label outside [0, output_dim) was fed to a model.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation's precondition (wrong model kind, bad root node...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Not enough (or inconsistent) data to satisfy a request.
class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dustbin
