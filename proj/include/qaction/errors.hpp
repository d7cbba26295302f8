#pragma once

#include <stdexcept>
#include <string>

namespace qa {

// Invalid input: out-of-domain arguments, malformed configuration.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical procedure (Newton, eigen-solve, optimiser, flow step) failed.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qa
