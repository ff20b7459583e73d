// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ddpm {

/// Invalid configuration, schedule or argument combination. CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite loss or state during training. CLI exit code 3.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A referenced file (checkpoint, config) does not exist. CLI exit code 4.
struct MissingArtifactError : std::runtime_error {
  explicit MissingArtifactError(const std::string& msg)
      : std::runtime_error(msg) {}
};

}  // namespace ddpm
