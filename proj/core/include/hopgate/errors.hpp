#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hopgate {

/// Operand shapes do not line up (vector lengths, matrix dims).
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A requested combination of modes/tensors cannot be served.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A numeric parameter is outside its legal range.
struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A token cannot be mapped through the closed vocabulary.
struct EncodingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t line)
      : std::runtime_error(msg + " (line " + std::to_string(line) + ")"), line(line) {}
  std::size_t line;
};

}  // namespace hopgate
