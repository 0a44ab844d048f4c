#pragma once

#include <stdexcept>
#include <string>

namespace mpmflow {

// Input/shape/consistency problems the caller could have avoided.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numerical failures discovered mid-solve (singular row, indefinite system,
// refinement cap, non-finite loss).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File format problems (bad magic, truncated payload, hash mismatch).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define MPMFLOW_CHECK(cond, msg)                      \
  do {                                                \
    if (!(cond)) throw ::mpmflow::InvalidInput(msg);  \
  } while (0)

}  // namespace mpmflow
