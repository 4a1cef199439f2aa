// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace amsizer {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration (manifest, target file, CLI arguments).
class ConfigError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace amsizer
