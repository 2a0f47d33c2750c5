#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace thicken {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

// Reading past the end of a recorded stream.
struct StreamExhausted : Error {
  using Error::Error;
};

// A lazy procedure ran out of refinements, pairs or tail intervals.
struct BudgetExceeded : Error {
  using Error::Error;
};

struct DegenerateParameters : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct LengthMismatch : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct FeasibilityGuard : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct SupportMismatch : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct EmptyConditioning : Error {
  using Error::Error;
};

struct SparseCells : Error {
  using Error::Error;
};

struct MaxLevelInsufficient : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct CoverageError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct OutOfWindow : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct InsufficientSamples : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

class ConfigError : public Error {
 public:
  ConfigError(std::size_t line, const std::string& message)
      : Error(line == 0 ? message : "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace thicken
