#pragma once

#include <stdexcept>
#include <string>

namespace psar {

// Bad input data, malformed files, violated preconditions. The CLI maps these to exit code 1.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// Singular systems, non-finite likelihoods and similar failures of the numerics.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace psar
