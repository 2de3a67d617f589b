#pragma once

#include <stdexcept>
#include <string>

namespace fbsde {

// Invalid run configuration or user input. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform; raised at expression construction time.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A non-finite value was produced during simulation or loss assembly.
// Carries the location that first went bad. Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& msg, long step = -1, long path = -1,
               long station = -1)
      : std::runtime_error(msg), step(step), path(path), station(station) {}

  long step;
  long path;
  long station;
};

// Filesystem failures (unreadable config, unwritable output). Exit code 4.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fbsde
