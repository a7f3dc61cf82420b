#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "mas3/error.hpp"
#include "mas3/eval.hpp"

namespace mas3 {
namespace {

Tensor random_points(std::size_t n, std::size_t dim, Rng& rng) {
  Tensor t({n, dim});
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

TEST(Miou, DiagonalIsPerfect) {
  const auto cm = ConfusionMatrix::from_counts(3, {5, 0, 0, 0, 7, 0, 0, 0, 9});
  const auto r = miou(cm);
  EXPECT_DOUBLE_EQ(r.mean, 1.0);
  for (const auto& v : r.per_class) EXPECT_DOUBLE_EQ(v.value(), 1.0);
}

TEST(Miou, EvenSplitIsOneThird) {
  const auto r = miou(ConfusionMatrix::from_counts(2, {50, 50, 50, 50}));
  // 50 / (50 + 50 + 50)
  EXPECT_DOUBLE_EQ(r.per_class[0].value(), 50.0 / 150.0);
  EXPECT_DOUBLE_EQ(r.per_class[1].value(), 50.0 / 150.0);
  EXPECT_DOUBLE_EQ(r.mean, 1.0 / 3.0);
}

TEST(Miou, AbsentClassIsExcluded) {
  const auto r = miou(ConfusionMatrix::from_counts(3, {4, 0, 0, 0, 0, 0, 1, 0, 3}));
  EXPECT_FALSE(r.per_class[1].has_value());
  const double iou0 = 4.0 / 5.0, iou2 = 3.0 / 4.0;
  EXPECT_DOUBLE_EQ(r.mean, (iou0 + iou2) / 2.0);
}

TEST(Miou, AllEmptyThrows) {
  EXPECT_THROW(miou(ConfusionMatrix(3)), InvalidInput);
}

TEST(Miou, InvariantUnderClassPermutation) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + rng.uniform_index(5);
    std::vector<std::uint64_t> counts(k * k);
    for (auto& c : counts) c = rng.uniform_index(20);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = k - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
    std::vector<std::uint64_t> permuted(k * k);
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < k; ++c) permuted[perm[r] * k + perm[c]] = counts[r * k + c];
    }
    const auto a = miou(ConfusionMatrix::from_counts(k, counts));
    const auto b = miou(ConfusionMatrix::from_counts(k, permuted));
    EXPECT_NEAR(a.mean, b.mean, 1e-12);
    for (std::size_t i = 0; i < k; ++i) {
      ASSERT_EQ(a.per_class[i].has_value(), b.per_class[perm[i]].has_value());
      if (a.per_class[i]) EXPECT_DOUBLE_EQ(*a.per_class[i], *b.per_class[perm[i]]);
    }
  }
}

TEST(ConfusionMatrix, AccumulateSkipsIgnored) {
  ConfusionMatrix cm(2);
  const std::vector<int> truth = {0, 1, kIgnoreLabel, 1};
  const std::vector<int> pred = {0, 0, 1, 1};
  cm.accumulate(truth, pred);
  EXPECT_EQ(cm.total(), 3u);
  EXPECT_EQ(cm.at(1, 0), 1u);
  EXPECT_THROW(cm.add(2, 0), InvalidInput);
}

TEST(BoundTerms, PseudoEqualsSource) {
  Rng rng(3);
  const PointSet s(random_points(10, 3, rng));
  const PointSet t(random_points(10, 3, rng));
  const auto b = bound_terms(s, s, t, 2, DistanceMode::kExact);
  EXPECT_EQ(b.w_sz, 0.0);
  EXPECT_EQ(b.w_st, b.w_zt);
}

TEST(BoundTerms, TargetEqualsSource) {
  Rng rng(4);
  const PointSet s(random_points(10, 2, rng));
  const PointSet z(random_points(10, 2, rng));
  const auto b = bound_terms(s, z, s, 2, DistanceMode::kExact);
  EXPECT_EQ(b.w_st, 0.0);
  EXPECT_GE(b.w_sz + b.w_zt, 0.0);
}

TEST(BoundTerms, TriangleHoldsOnRandomTriples) {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const PointSet s(random_points(16, 3, rng));
    const PointSet z(random_points(16, 3, rng));
    const PointSet t(random_points(16, 3, rng));
    for (int order : {1, 2}) {
      const auto b = bound_terms(s, z, t, order, DistanceMode::kExact);
      EXPECT_TRUE(b.triangle_holds);
      EXPECT_LE(b.w_st, b.w_sz + b.w_zt + kTriangleTolerance);
    }
  }
}

TEST(BoundTerms, MixedModesRejected) {
  EXPECT_THROW(assemble_bound_terms({1.0, DistanceMode::kExact}, {1.0, DistanceMode::kSliced},
                                    {1.0, DistanceMode::kExact}, 0.0, 1, 1),
               InvalidInput);
}

TEST(BoundTerms, ExactViolationRaises) {
  EXPECT_THROW(assemble_bound_terms({1.0, DistanceMode::kExact}, {1.0, DistanceMode::kExact},
                                    {3.0, DistanceMode::kExact}, 0.0, 1, 1),
               Error);
  const auto sliced = assemble_bound_terms({1.0, DistanceMode::kSliced},
                                           {1.0, DistanceMode::kSliced},
                                           {3.0, DistanceMode::kSliced}, 0.0, 1, 1);
  EXPECT_FALSE(sliced.triangle_holds);
}

TEST(BoundTerms, SlicedModeAcceptsAnySize) {
  Rng rng(6);
  const PointSet s(random_points(100, 2, rng));
  const PointSet z(random_points(70, 2, rng));
  const PointSet t(random_points(130, 2, rng));
  const auto b = bound_terms(s, z, t, 2, DistanceMode::kSliced, SwdConfig{50, 2, 1});
  EXPECT_EQ(b.mode, DistanceMode::kSliced);
  EXPECT_GT(b.w_st, 0.0);
  EXPECT_THROW(bound_terms(s, z, t, 2, DistanceMode::kExact), UnsupportedInstance);
}

TEST(SubsampleRows, DistinctRowsWithoutReplacement) {
  Tensor pts({20, 1});
  for (std::size_t i = 0; i < 20; ++i) pts[i] = static_cast<double>(i);
  Rng rng(9);
  const Tensor s = subsample_rows(pts, 8, rng);
  std::vector<double> v(s.data().begin(), s.data().end());
  std::sort(v.begin(), v.end());
  EXPECT_EQ(std::adjacent_find(v.begin(), v.end()), v.end());
  EXPECT_EQ(subsample_rows(pts, 50, rng).rows(), 20u);
}

}  // namespace
}  // namespace mas3
