// Error types shared across the library. The CLI maps NumericError to
// exit code 2 and everything else to exit code 1.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reqvae {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : Error {
  using Error::Error;
};

// Invalid byte sequence in an input expected to be UTF-8.
struct EncodingError : Error {
  EncodingError(const std::string& what, std::size_t offset)
      : Error(what), byte_offset(offset) {}
  std::size_t byte_offset;
};

// Malformed structured input (embedding file, vocabulary file, ...).
struct FormatError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Shape mismatch between operands of a numeric operation.
struct DimensionError : Error {
  using Error::Error;
};

// Non-finite value where a finite one is required (overflow, bad gradient).
struct NumericError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace reqvae
