#pragma once

#include <stdexcept>
#include <string>

namespace multires {

// Input that violates a data-model invariant. Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Factorization failure or non-finite value that cannot be absorbed as a
// rejected proposal. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace multires
