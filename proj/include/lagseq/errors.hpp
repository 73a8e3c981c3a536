#pragma once

#include <stdexcept>
#include <string>

namespace lagseq {

// Bad input: malformed files, violated preconditions, unknown options.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A computation that could not be completed: non-convergence, singularity.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lagseq
