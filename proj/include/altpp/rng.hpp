#pragma once

#include <cstdint>
#include <random>

#include "altpp/tensor.hpp"

namespace altpp {

using Rng = std::mt19937_64;

// splitmix64 mix of a base seed with stream indices; used to give every
// epoch, sequence and ensemble member its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Standard-normal tensor of the given shape.
Tensor standard_normal(Rng& rng, Shape shape);

}  // namespace altpp
