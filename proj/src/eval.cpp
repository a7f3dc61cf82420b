#include "mas3/eval.hpp"

#include <algorithm>
#include <numeric>

#include "mas3/error.hpp"

namespace mas3 {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw InvalidInput("ConfusionMatrix: zero classes");
}

ConfusionMatrix ConfusionMatrix::from_counts(std::size_t num_classes,
                                             std::vector<std::uint64_t> counts) {
  ConfusionMatrix cm(num_classes);
  if (counts.size() != num_classes * num_classes) {
    throw InvalidInput("ConfusionMatrix: expected " +
                       std::to_string(num_classes * num_classes) + " counts");
  }
  cm.counts_ = std::move(counts);
  return cm;
}

void ConfusionMatrix::add(int truth, int prediction, std::uint64_t count) {
  const auto k = static_cast<int>(k_);
  if (truth < 0 || truth >= k || prediction < 0 || prediction >= k) {
    throw InvalidInput("ConfusionMatrix: label out of range (" + std::to_string(truth) +
                       ", " + std::to_string(prediction) + ")");
  }
  counts_[static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(prediction)] += count;
}

void ConfusionMatrix::accumulate(std::span<const int> truth,
                                 std::span<const int> prediction, int ignore) {
  if (truth.size() != prediction.size()) {
    throw InvalidInput("ConfusionMatrix: truth and prediction sizes differ");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == ignore) continue;
    add(truth[i], prediction[i]);
  }
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

MiouResult miou(const ConfusionMatrix& cm) {
  const std::size_t k = cm.num_classes();
  MiouResult out;
  out.per_class.resize(k);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::uint64_t tp = cm.at(c, c);
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(uni);
    out.per_class[c] = iou;
    sum += iou;
    ++present;
  }
  if (present == 0) throw InvalidInput("miou: every class is empty");
  out.mean = sum / static_cast<double>(present);
  return out;
}

std::string to_string(DistanceMode mode) {
  return mode == DistanceMode::kExact ? "exact" : "sliced";
}

DistanceMode distance_mode_from_string(const std::string& s) {
  if (s == "exact") return DistanceMode::kExact;
  if (s == "sliced") return DistanceMode::kSliced;
  throw InvalidInput("unknown distance mode '" + s + "'");
}

BoundTerms assemble_bound_terms(DistanceTerm w_sz, DistanceTerm w_zt, DistanceTerm w_st,
                                double source_risk, std::size_t n_s, std::size_t n_t) {
  if (w_sz.mode != w_zt.mode || w_sz.mode != w_st.mode) {
    throw InvalidInput("bound terms mix exact and sliced estimators");
  }
  if (w_sz.value < 0.0 || w_zt.value < 0.0 || w_st.value < 0.0) {
    throw InvalidInput("bound terms: negative distance");
  }
  BoundTerms b;
  b.w_sz = w_sz.value;
  b.w_zt = w_zt.value;
  b.w_st = w_st.value;
  b.source_risk = source_risk;
  b.n_s = n_s;
  b.n_t = n_t;
  b.mode = w_sz.mode;
  b.triangle_slack = b.w_sz + b.w_zt - b.w_st;
  b.triangle_holds = b.triangle_slack >= -kTriangleTolerance;
  if (b.mode == DistanceMode::kExact && !b.triangle_holds) {
    throw Error("exact Wasserstein terms violate the triangle inequality by " +
                std::to_string(-b.triangle_slack));
  }
  return b;
}

BoundTerms bound_terms(const PointSet& source, const PointSet& pseudo,
                       const PointSet& target, int order, DistanceMode mode,
                       const SwdConfig& swd, double source_risk) {
  auto distance = [&](const PointSet& a, const PointSet& b) {
    if (mode == DistanceMode::kExact) return DistanceTerm{exact_wasserstein(a, b, order), mode};
    SwdConfig cfg = swd;
    cfg.order = order;
    return DistanceTerm{sliced_wasserstein(a, b, cfg), mode};
  };
  return assemble_bound_terms(distance(source, pseudo), distance(pseudo, target),
                              distance(source, target), source_risk, source.size(),
                              target.size());
}

Tensor subsample_rows(const Tensor& points, std::size_t n, Rng& rng) {
  const std::size_t rows = points.rows();
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  n = std::min(n, rows);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.uniform_index(rows - i);
    std::swap(idx[i], idx[j]);
  }
  Tensor out({n, points.cols()});
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = points.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace mas3
