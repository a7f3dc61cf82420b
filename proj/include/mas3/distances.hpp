#pragma once

#include <cstdint>
#include <span>

#include "mas3/autodiff.hpp"
#include "mas3/tensor.hpp"

namespace mas3 {

// n x dim sample matrix, n >= 1, all entries finite.
class PointSet {
 public:
  explicit PointSet(Tensor points);

  std::size_t size() const { return points_.rows(); }
  std::size_t dim() const { return points_.cols(); }
  const Tensor& points() const { return points_; }
  std::span<const double> point(std::size_t i) const { return points_.row(i); }

 private:
  Tensor points_;
};

struct SwdConfig {
  std::size_t projections = 100;
  int order = 2;
  std::uint64_t seed = 0;
};

// Closed-form W_d between two empirical 1-D distributions. Unequal sizes are
// matched on the quantile grid (i + 1/2) / max(|a|, |b|).
double wasserstein_1d(std::span<const double> a, std::span<const double> b, int order);

// ( (1/J) sum_j W_d^d(<g_j, p>, <g_j, q>) )^(1/d) with g_j drawn by
// sample_unit_directions(J, dim, Rng(cfg.seed)).
double sliced_wasserstein(const PointSet& p, const PointSet& q, const SwdConfig& cfg);

// Same estimator recorded on a tape; `directions` is J x dim. Gradients reach
// both point sets through the per-projection sorted matchings.
ad::DiffValue sliced_wasserstein(const ad::DiffValue& p, const ad::DiffValue& q,
                                 const Tensor& directions, int order);

// Exact W_d between equal-size uniform point sets via the Hungarian method.
// Limited to n <= kExactWassersteinMaxPoints.
inline constexpr std::size_t kExactWassersteinMaxPoints = 64;
double exact_wasserstein(const PointSet& p, const PointSet& q, int order);

// Minimum-cost perfect matching on a square row-major cost matrix; returns
// the column assigned to each row.
std::vector<std::size_t> solve_assignment(const Tensor& cost);

}  // namespace mas3
