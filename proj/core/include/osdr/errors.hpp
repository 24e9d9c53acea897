#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace osdr {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or length mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Malformed input file (bad line, inconsistent dimensions, ...).
struct FormatError : Error {
  using Error::Error;
};

// API misuse: bad argument combination, missing labels, empty input.
struct UsageError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : Error {
  using Error::Error;
};

// File could not be opened, read, or written.
struct IoError : Error {
  using Error::Error;
};

// Optimization produced a non-finite or exploding loss.
struct TrainingDiverged : Error {
  TrainingDiverged(const std::string& what, std::size_t step)
      : Error(what), step(step) {}
  std::size_t step;
};

}  // namespace osdr
