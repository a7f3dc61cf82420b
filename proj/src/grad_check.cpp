#include "mas3/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mas3/error.hpp"

namespace mas3 {
namespace {

struct Probe {
  double value;
  std::uint64_t signature;
};

Probe evaluate(const ScalarFunction& fn, const Tensor& point) {
  ad::Tape tape;
  const auto x = tape.constant(point);
  const auto y = fn(tape, x);
  return {y.value().item(), tape.branch_signature()};
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& fn, const Tensor& point,
                           double eps) {
  if (!(eps > 1e-8 && eps < 1e-2)) {
    throw InvalidInput("grad_check: eps must lie in (1e-8, 1e-2)");
  }
  ad::Tape tape;
  const auto x = tape.variable(point);
  const auto y = fn(tape, x);
  if (y.value().size() != 1) throw InvalidInput("grad_check: function is not scalar");
  const std::uint64_t base_signature = tape.branch_signature();
  tape.backward(y);
  const Tensor analytic = x.grad();

  GradCheckResult result;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + eps;
    const Probe plus = evaluate(fn, probe);
    probe[i] = point[i] - eps;
    const Probe minus = evaluate(fn, probe);
    probe[i] = point[i];
    if (plus.signature != base_signature || minus.signature != base_signature) {
      result.skipped.push_back(i);
      continue;
    }
    const double central = (plus.value - minus.value) / (2.0 * eps);
    const double err =
        std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_coordinate = i;
    }
  }
  return result;
}

}  // namespace mas3
