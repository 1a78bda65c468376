#pragma once

#include <stdexcept>
#include <string>

namespace cheaptalk {

// Invalid maze / trainer configuration.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// API misuse: stepping a finished episode, shape mismatch, backward on a
// detached tensor.
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

// A belief update received an observation with zero posterior mass.
class InconsistencyError : public std::runtime_error {
 public:
  explicit InconsistencyError(const std::string& what)
      : std::runtime_error(what) {}
};

// Rejection sampling ran out of attempts.
class SamplingError : public std::runtime_error {
 public:
  explicit SamplingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cheaptalk
