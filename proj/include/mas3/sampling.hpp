#pragma once

#include "mas3/rng.hpp"
#include "mas3/tensor.hpp"

namespace mas3 {

// count x dim matrix of directions uniform on the unit sphere. Row r depends
// only on (rng, r).
Tensor sample_unit_directions(std::size_t count, std::size_t dim, const Rng& rng);

}  // namespace mas3
