// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fieldsr {

// Error taxonomy shared across the library. The CLI maps ParameterError to a
// usage exit code and everything else to a runtime failure.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid argument values (bad ranges, empty inputs, unknown names).
struct ParameterError : Error {
  using Error::Error;
};

// Mismatched array dimensions.
struct ShapeError : Error {
  using Error::Error;
};

// Numerical breakdown (underflow, non-finite values) with a diagnostic.
struct NumericError : Error {
  using Error::Error;
};

// Operation not valid in the object's current state (e.g. exhausted budget).
struct StateError : Error {
  using Error::Error;
};

// Operation not supported by this backend.
struct UnsupportedError : Error {
  using Error::Error;
};

// I/O and file-format failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace fieldsr
