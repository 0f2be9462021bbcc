#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stula {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidInput : Error {
  using Error::Error;
};

struct InvalidParameter : Error {
  using Error::Error;
};

// A potential or drift evaluation produced a non-finite value. Carries the
// offending point so divergence handlers can report where the blow-up happened.
struct OverflowError : Error {
  std::vector<double> at;
  OverflowError(const std::string& msg, std::vector<double> x)
      : Error(msg), at(std::move(x)) {}
};

// Every chain in a run went non-finite.
struct DivergenceError : Error {
  std::int64_t first_nonfinite_step;
  DivergenceError(const std::string& msg, std::int64_t step)
      : Error(msg), first_nonfinite_step(step) {}
};

// Grid box fails tail containment; names the offending edge, e.g. "x upper".
struct BoxTooSmall : Error {
  std::string edge;
  BoxTooSmall(const std::string& msg, std::string which)
      : Error(msg), edge(std::move(which)) {}
};

struct MissingMetadata : Error {
  using Error::Error;
};

// Iterative solver ran out of iterations or the assembly hit a value outside
// double range; message carries residuals or the offending quantity.
struct NumericalFailure : Error {
  using Error::Error;
};

// Config parse/validation failure; message names the field.
struct ConfigError : Error {
  using Error::Error;
};

// CSV input does not match the schema a consumer requires; names the columns.
struct SchemaError : Error {
  using Error::Error;
};

}  // namespace stula
