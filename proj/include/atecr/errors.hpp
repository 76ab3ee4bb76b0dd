#pragma once

#include <stdexcept>
#include <string>

namespace atecr {

// Invalid arguments or out-of-range values supplied by the caller.
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input files (CSV cells, JSON configs).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing or mismatched columns in an input schema.
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

// Solver breakdowns: singular information, monotone likelihood, exhausted retries.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace atecr
