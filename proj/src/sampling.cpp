#include "mas3/sampling.hpp"

#include <cmath>

#include "mas3/error.hpp"

namespace mas3 {

Tensor sample_unit_directions(std::size_t count, std::size_t dim, const Rng& rng) {
  if (count == 0 || dim == 0) {
    throw InvalidInput("sample_unit_directions: count and dim must be >= 1");
  }
  Tensor out({count, dim});
  for (std::size_t r = 0; r < count; ++r) {
    Rng stream = rng.fork(r);
    auto row = out.row(r);
    double norm2 = 0.0;
    while (norm2 == 0.0) {
      norm2 = 0.0;
      for (auto& v : row) {
        v = stream.normal();
        norm2 += v * v;
      }
    }
    // Divide rather than multiply by the reciprocal so 1-D draws are exactly +-1.
    const double norm = std::sqrt(norm2);
    for (auto& v : row) v /= norm;
  }
  return out;
}

}  // namespace mas3
