#pragma once

#include <cstdint>
#include <vector>

#include "gflow/geometry.hpp"

namespace gflow {

enum class CouplingSource : std::uint8_t { random = 0, estimated = 1 };

// A (noise, target) pair in latent space.
struct CouplingPair {
  LatentGeometry z0;  // noise
  LatentGeometry z1;  // target; already OMT-aligned to z0 when `aligned`
  bool aligned = false;
  CouplingSource source = CouplingSource::random;
  bool valid = true;  // decoded target passed the validity rule

  bool operator==(const CouplingPair&) const = default;
};

using CouplingSet = std::vector<CouplingPair>;

// Sizes and widths agree, both coordinate parts zero-CoM (1e-8).
void validate(const CouplingPair& p);

}  // namespace gflow
