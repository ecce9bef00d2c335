#pragma once

#include <stdexcept>
#include <string>

namespace geobias {

// Malformed or out-of-range input data. The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation could not produce a well-defined result (singular design,
// degenerate variance, ...). The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace geobias
