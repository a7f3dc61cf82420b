#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mas3/distances.hpp"
#include "mas3/rng.hpp"

namespace mas3 {

inline constexpr int kIgnoreLabel = 255;

// K x K pixel counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);
  static ConfusionMatrix from_counts(std::size_t num_classes,
                                     std::vector<std::uint64_t> counts);

  // Pixels whose truth equals `ignore` are skipped.
  void accumulate(std::span<const int> truth, std::span<const int> prediction,
                  int ignore = kIgnoreLabel);
  void add(int truth, int prediction, std::uint64_t count = 1);

  std::size_t num_classes() const { return k_; }
  std::uint64_t at(std::size_t truth, std::size_t prediction) const {
    return counts_[truth * k_ + prediction];
  }
  std::uint64_t total() const;
  const std::vector<std::uint64_t>& counts() const { return counts_; }

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

struct MiouResult {
  // nullopt for classes absent from both truth and prediction.
  std::vector<std::optional<double>> per_class;
  double mean = 0.0;
};

// IoU_k = TP / (TP + FP + FN); classes with an empty union are left out of
// the mean. Throws InvalidInput when every class is empty.
MiouResult miou(const ConfusionMatrix& cm);

enum class DistanceMode { kExact, kSliced };

std::string to_string(DistanceMode mode);
DistanceMode distance_mode_from_string(const std::string& s);

struct DistanceTerm {
  double value = 0.0;
  DistanceMode mode = DistanceMode::kExact;
};

// Observable terms of the target-risk bound
//   eps_T <= eps_S + W(S, Z) + W(Z, T) + sample-size term + e_C(h*),
// where the last two involve constants that cannot be measured and are only
// reported symbolically.
struct BoundTerms {
  double w_sz = 0.0;
  double w_zt = 0.0;
  double w_st = 0.0;
  double source_risk = 0.0;
  std::size_t n_s = 0;
  std::size_t n_t = 0;
  DistanceMode mode = DistanceMode::kExact;
  // w_sz + w_zt - w_st; non-negative whenever the triangle inequality holds.
  double triangle_slack = 0.0;
  bool triangle_holds = true;
};

inline constexpr double kTriangleTolerance = 1e-9;

// Throws InvalidInput if the three terms were computed with different
// estimators, and Error if an exact-mode triple violates the triangle
// inequality beyond kTriangleTolerance.
BoundTerms assemble_bound_terms(DistanceTerm w_sz, DistanceTerm w_zt, DistanceTerm w_st,
                                double source_risk, std::size_t n_s, std::size_t n_t);

// Exact mode needs three sets of one common size <= 64.
BoundTerms bound_terms(const PointSet& source, const PointSet& pseudo,
                       const PointSet& target, int order, DistanceMode mode,
                       const SwdConfig& swd = {}, double source_risk = 0.0);

// n rows drawn uniformly without replacement (all rows if n >= size).
Tensor subsample_rows(const Tensor& points, std::size_t n, Rng& rng);

}  // namespace mas3
