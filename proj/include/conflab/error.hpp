#pragma once

#include <stdexcept>
#include <string>

namespace conflab {

/// Bad wiring between components: dimension mismatches, unknown enum names.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Caller-supplied values outside their documented domain.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed external data (files that do not match their declared layout).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Broken internal invariant (stale caches, non-finite state).
struct InternalError : std::runtime_error {
  explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace conflab
