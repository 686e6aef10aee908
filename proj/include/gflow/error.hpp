#pragma once

#include <stdexcept>
#include <string>

namespace gflow {

// Contract violations on inputs (size mismatch, non-centered coordinates, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gflow
