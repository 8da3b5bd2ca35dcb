// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ctkd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed user input (waveforms, label sequences, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Bad or inconsistent configuration. Carries the offending key when known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string key = {})
      : Error(message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Unreadable file: wrong magic, unsupported version, unparsable header.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File parsed but its content is incomplete or disagrees with its header/config.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctkd
