#pragma once

#include <stdexcept>
#include <string>

namespace ionpulse {

// Bad configuration or mismatched inputs. The CLI maps this to exit code 2.
struct validation_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An iterative solver failed to converge or produced non-finite values.
// The CLI maps this to exit code 4.
struct solver_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace ionpulse
