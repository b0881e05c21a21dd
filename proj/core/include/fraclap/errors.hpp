#pragma once

#include <stdexcept>
#include <string>

namespace fraclap {

// Bad user input: argument ranges, malformed config, unreadable files.
// The CLI maps this family to exit code 2.
struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Text-format violation; message carries the 1-based line number.
struct ParseError : InvalidInput {
  using InvalidInput::InvalidInput;
};

// A numerical procedure failed: no convergence, singular factorization,
// non-finite state. The CLI maps this family to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fraclap
