#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mas3/distances.hpp"
#include "mas3/error.hpp"
#include "mas3/grad_check.hpp"
#include "mas3/rng.hpp"
#include "mas3/sampling.hpp"

namespace mas3 {
namespace {

Tensor random_points(std::size_t n, std::size_t dim, Rng& rng, double shift = 0.0) {
  Tensor t({n, dim});
  for (auto& v : t.data()) v = rng.normal() + shift;
  return t;
}

// Minimum over all n! matchings of the mean d-th power cost, then the 1/d root.
double brute_force_wasserstein(const Tensor& p, const Tensor& q, int order) {
  const std::size_t n = p.rows();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < p.cols(); ++k) {
        const double diff = p.at(i, k) - q.at(perm[i], k);
        d2 += diff * diff;
      }
      c += std::pow(std::sqrt(d2), order);
    }
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best / static_cast<double>(n), 1.0 / order);
}

TEST(Wasserstein1d, IdenticalSamplesGiveZero) {
  const std::vector<double> a = {3, 7, 9};
  for (int d = 1; d <= 4; ++d) EXPECT_EQ(wasserstein_1d(a, a, d), 0.0);
}

TEST(Wasserstein1d, TwoPointShift) {
  EXPECT_DOUBLE_EQ(wasserstein_1d(std::vector<double>{0, 1}, std::vector<double>{1, 2}, 2), 1.0);
  EXPECT_DOUBLE_EQ(wasserstein_1d(std::vector<double>{0}, std::vector<double>{5}, 1), 5.0);
}

TEST(Wasserstein1d, MatchesBruteForceOnEqualSizes) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(7);
    const int d = 1 + static_cast<int>(rng.uniform_index(3));
    const Tensor a = random_points(n, 1, rng);
    const Tensor b = random_points(n, 1, rng, 0.5);
    EXPECT_NEAR(wasserstein_1d(a.data(), b.data(), d), brute_force_wasserstein(a, b, d), 1e-9);
  }
}

TEST(Wasserstein1d, UnequalSizesUseQuantileGrid) {
  // a read at levels 1/6, 1/2, 5/6 of its two-point CDF: 0, the jump
  // midpoint 2, then 4.
  const std::vector<double> a = {0, 4};
  const std::vector<double> b = {1, 2, 3};
  const double expected = std::sqrt((1.0 + 0.0 + 1.0) / 3.0);
  EXPECT_DOUBLE_EQ(wasserstein_1d(a, b, 2), expected);
  EXPECT_DOUBLE_EQ(wasserstein_1d(b, a, 2), expected);
  EXPECT_EQ(wasserstein_1d(std::vector<double>{1}, std::vector<double>{1, 1, 1}, 2), 0.0);
}

TEST(Wasserstein1d, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(wasserstein_1d(std::vector<double>{}, std::vector<double>{1}, 2), InvalidInput);
  EXPECT_THROW(wasserstein_1d(std::vector<double>{NAN}, std::vector<double>{1}, 2), InvalidInput);
}

TEST(ExactWasserstein, Trivial) {
  Rng rng(2);
  const PointSet p(random_points(5, 3, rng));
  EXPECT_NEAR(exact_wasserstein(p, p, 2), 0.0, 1e-12);
  const PointSet a(Tensor::matrix(1, 2, {0, 0}));
  const PointSet b(Tensor::matrix(1, 2, {3, 4}));
  EXPECT_DOUBLE_EQ(exact_wasserstein(a, b, 2), 5.0);
}

TEST(ExactWasserstein, MatchesFactorialBruteForceOnSixPoints) {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor p = random_points(6, 2, rng);
    const Tensor q = random_points(6, 2, rng, 1.0);
    for (int d : {1, 2, 3}) {
      EXPECT_NEAR(exact_wasserstein(PointSet(p), PointSet(q), d),
                  brute_force_wasserstein(p, q, d), 1e-9);
    }
  }
}

TEST(ExactWasserstein, RejectsUnsupportedInstances) {
  Rng rng(1);
  EXPECT_THROW(exact_wasserstein(PointSet(random_points(3, 2, rng)),
                                 PointSet(random_points(4, 2, rng)), 2),
               UnsupportedInstance);
  EXPECT_THROW(exact_wasserstein(PointSet(random_points(65, 2, rng)),
                                 PointSet(random_points(65, 2, rng)), 2),
               UnsupportedInstance);
  EXPECT_NO_THROW(exact_wasserstein(PointSet(random_points(64, 2, rng)),
                                    PointSet(random_points(64, 2, rng)), 2));
}

TEST(MetricProperties, SymmetryAndTriangleOnRandomTriples) {
  Rng rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(7);
    const std::size_t dim = 1 + rng.uniform_index(3);
    const int d = 1 + static_cast<int>(rng.uniform_index(2));
    const PointSet p(random_points(n, dim, rng));
    const PointSet q(random_points(n, dim, rng, 0.7));
    const PointSet r(random_points(n, dim, rng, -0.4));
    const double pq = exact_wasserstein(p, q, d);
    EXPECT_EQ(pq, exact_wasserstein(q, p, d));
    EXPECT_LE(exact_wasserstein(p, r, d), pq + exact_wasserstein(q, r, d) + 1e-9);

    const auto a = random_points(n, 1, rng);
    const auto b = random_points(n, 1, rng, 1.0);
    const auto c = random_points(n, 1, rng, -1.0);
    EXPECT_EQ(wasserstein_1d(a.data(), b.data(), d), wasserstein_1d(b.data(), a.data(), d));
    EXPECT_LE(wasserstein_1d(a.data(), c.data(), d),
              wasserstein_1d(a.data(), b.data(), d) + wasserstein_1d(b.data(), c.data(), d) + 1e-9);
  }
}

TEST(SlicedWasserstein, IdenticalSetsGiveZero) {
  Rng rng(4);
  const PointSet p(random_points(20, 5, rng));
  EXPECT_EQ(sliced_wasserstein(p, p, {50, 2, 9}), 0.0);
  EXPECT_EQ(sliced_wasserstein(p, p, {3, 1, 9}), 0.0);
}

TEST(SlicedWasserstein, OneDimensionalReductionIsExact) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(12);
    const Tensor a = random_points(n, 1, rng);
    const Tensor b = random_points(n, 1, rng, 0.3);
    for (int d : {1, 2, 3}) {
      for (std::size_t j : {1u, 7u, 64u}) {
        const SwdConfig cfg{j, d, static_cast<std::uint64_t>(trial)};
        EXPECT_EQ(sliced_wasserstein(PointSet(a), PointSet(b), cfg),
                  wasserstein_1d(a.data(), b.data(), d));
      }
    }
  }
}

TEST(SlicedWasserstein, OneDimensionalReductionHoldsForUnequalSizes) {
  Rng rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(12), m = 1 + rng.uniform_index(12);
    const Tensor a = random_points(n, 1, rng);
    const Tensor b = random_points(m, 1, rng);
    for (int d : {1, 2, 3}) {
      const SwdConfig cfg{9, d, static_cast<std::uint64_t>(trial)};
      EXPECT_EQ(sliced_wasserstein(PointSet(a), PointSet(b), cfg),
                wasserstein_1d(a.data(), b.data(), d))
          << n << " vs " << m;
    }
  }
}

TEST(Wasserstein1d, MirrorInvariantForUnequalSizes) {
  const std::vector<double> a = {0, 4}, b = {1, 2, 3};
  const std::vector<double> na = {0, -4}, nb = {-1, -2, -3};
  for (int d = 1; d <= 3; ++d) EXPECT_EQ(wasserstein_1d(a, b, d), wasserstein_1d(na, nb, d));
}

TEST(SlicedWasserstein, BoundedByExactAndPositive) {
  Rng rng(6);
  const Tensor p = random_points(8, 2, rng);
  const Tensor q = random_points(8, 2, rng, 1.5);
  const double swd = sliced_wasserstein(PointSet(p), PointSet(q), {2000, 2, 1});
  const double wd = exact_wasserstein(PointSet(p), PointSet(q), 2);
  EXPECT_GT(swd, 0.0);
  EXPECT_LE(swd, wd + 1e-9);
}

TEST(SlicedWasserstein, StandardDeviationDecaysWithProjections) {
  Rng rng(8);
  const PointSet p(random_points(40, 2, rng));
  const PointSet q(random_points(40, 2, rng, 1.0));
  auto spread = [&](std::size_t j) {
    std::vector<double> v;
    for (std::uint64_t s = 0; s < 200; ++s) {
      v.push_back(std::pow(sliced_wasserstein(p, q, {j, 2, 1000 + s}), 2));
    }
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / (v.size() - 1));
  };
  const double s5 = spread(5), s20 = spread(20), s80 = spread(80), s320 = spread(320);
  EXPECT_GT(s5, s20);
  EXPECT_GT(s20, s80);
  EXPECT_GT(s80, s320);
  // Each 4x step in J should halve the spread; allow Monte-Carlo slack.
  EXPECT_NEAR(s20 / s5, 0.5, 0.15);
  EXPECT_NEAR(s80 / s20, 0.5, 0.15);
  EXPECT_NEAR(s320 / s80, 0.5, 0.15);
}

TEST(SlicedWasserstein, InvariantUnderCommonRotation) {
  Rng rng(12);
  const Tensor p = random_points(30, 2, rng);
  const Tensor q = random_points(30, 2, rng, 0.8);
  const double angle = 0.7;
  auto rotate = [&](const Tensor& t) {
    Tensor r = t;
    for (std::size_t i = 0; i < t.rows(); ++i) {
      r.at(i, 0) = std::cos(angle) * t.at(i, 0) - std::sin(angle) * t.at(i, 1);
      r.at(i, 1) = std::sin(angle) * t.at(i, 0) + std::cos(angle) * t.at(i, 1);
    }
    return r;
  };
  const double base = sliced_wasserstein(PointSet(p), PointSet(q), {5000, 2, 3});
  const double rotated = sliced_wasserstein(PointSet(rotate(p)), PointSet(rotate(q)), {5000, 2, 4});
  EXPECT_NEAR(rotated / base, 1.0, 0.03);
}

TEST(SlicedWasserstein, DimensionMismatchIsInvalid) {
  Rng rng(1);
  EXPECT_THROW(sliced_wasserstein(PointSet(random_points(3, 2, rng)),
                                  PointSet(random_points(3, 3, rng)), {}),
               InvalidInput);
}

TEST(SlicedWasserstein, TapeRouteAgreesWithValueRoute) {
  Rng rng(13);
  for (auto [np, nq] : {std::pair{16, 16}, std::pair{10, 23}}) {
    const Tensor p = random_points(np, 4, rng);
    const Tensor q = random_points(nq, 4, rng, 0.5);
    const SwdConfig cfg{37, 2, 55};
    ad::Tape tape;
    const auto dirs = sample_unit_directions(cfg.projections, 4, Rng(cfg.seed));
    const auto v = sliced_wasserstein(tape.constant(p), tape.constant(q), dirs, cfg.order);
    EXPECT_NEAR(v.value().item(), sliced_wasserstein(PointSet(p), PointSet(q), cfg), 1e-12);
  }
}

TEST(SlicedWasserstein, GradientMatchesCentralDifferences) {
  Rng rng(14);
  const Tensor p = random_points(4, 3, rng);
  const Tensor q = random_points(4, 3, rng, 0.6);
  const Tensor dirs = sample_unit_directions(5, 3, Rng(2));
  for (int order : {1, 2, 3}) {
    auto wrt_p = [&](ad::Tape& t, const ad::DiffValue& x) {
      return sliced_wasserstein(x, t.constant(q), dirs, order);
    };
    auto wrt_q = [&](ad::Tape& t, const ad::DiffValue& x) {
      return sliced_wasserstein(t.constant(p), x, dirs, order);
    };
    const auto rp = grad_check(wrt_p, p, 1e-6);
    const auto rq = grad_check(wrt_q, q, 1e-6);
    EXPECT_LT(rp.max_relative_error, 1e-5) << "order " << order;
    EXPECT_LT(rq.max_relative_error, 1e-5) << "order " << order;
  }
}

TEST(Assignment, PicksCheapestPermutation) {
  const Tensor cost = Tensor::matrix(3, 3, {4, 1, 3, 2, 0, 5, 3, 2, 2});
  const auto a = solve_assignment(cost);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) total += cost.at(i, a[i]);
  EXPECT_DOUBLE_EQ(total, 5.0);
}

}  // namespace
}  // namespace mas3
