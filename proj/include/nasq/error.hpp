// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace nasq {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Token sequence does not map onto the configured space.
class DecodeError : public Error {
 public:
  DecodeError(std::size_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace nasq
