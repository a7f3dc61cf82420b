#pragma once

#include <functional>
#include <vector>

#include "mas3/autodiff.hpp"

namespace mas3 {

struct GradCheckResult {
  // max over checked coordinates of |analytic - central| / max(1, |central|)
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  // Coordinates whose +/- eps probes crossed a branch (sort tie, relu kink)
  // and were left out of the maximum.
  std::vector<std::size_t> skipped;
};

using ScalarFunction =
    std::function<ad::DiffValue(ad::Tape&, const ad::DiffValue& point)>;

// Compares the tape gradient of `fn` at `point` against central differences
// with step `eps`, which must lie in (1e-8, 1e-2).
GradCheckResult grad_check(const ScalarFunction& fn, const Tensor& point,
                           double eps);

}  // namespace mas3
