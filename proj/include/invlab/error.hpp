#pragma once

#include <stdexcept>
#include <string>

namespace invlab {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or malformed user input. The CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unreadable checkpoint, or a checkpoint whose objective/shape does not fit
// the requested operation. The CLI maps it to exit code 3.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace invlab
