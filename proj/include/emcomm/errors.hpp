#pragma once

#include <stdexcept>
#include <string>

namespace emcomm {

/// Invalid user-supplied configuration (bad layout name, out-of-range parameter, unknown key).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation was called in a state its contract forbids.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace emcomm
