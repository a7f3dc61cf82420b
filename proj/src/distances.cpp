#include "mas3/distances.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mas3/error.hpp"
#include "mas3/rng.hpp"
#include "mas3/sampling.hpp"

namespace mas3 {
namespace {

void require_order(int order) {
  if (order < 1) throw InvalidInput("Wasserstein order must be >= 1");
}

double power(double x, int order) {
  x = std::abs(x);
  if (order == 1) return x;
  if (order == 2) return x * x;
  return std::pow(x, order);
}

double root(double x, int order) {
  if (order == 1) return x;
  if (order == 2) return std::sqrt(x);
  return std::pow(x, 1.0 / order);
}

// W_d^d between two sorted samples. Terms are summed in ascending order so the
// result depends only on the multiset of matched gaps; this makes a mirrored
// pair of inputs give a bit-identical cost.
double sorted_power_cost(std::span<const double> a, std::span<const double> b,
                         int order, std::vector<double>& terms) {
  const std::size_t m = std::max(a.size(), b.size());
  terms.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double x = ad::quantile_value(a.data(), i, a.size(), m);
    const double y = ad::quantile_value(b.data(), i, b.size(), m);
    terms[i] = power(x - y, order);
  }
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s / static_cast<double>(m);
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw InvalidInput(std::string(what) + ": non-finite sample");
  }
}

}  // namespace

PointSet::PointSet(Tensor points) : points_(std::move(points)) {
  if (points_.rank() != 2) {
    throw InvalidInput("PointSet needs an n x dim matrix, got " +
                       shape_string(points_.shape()));
  }
  if (points_.rows() == 0 || points_.cols() == 0) throw InvalidInput("PointSet is empty");
  if (!points_.all_finite()) throw InvalidInput("PointSet has non-finite entries");
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b, int order) {
  require_order(order);
  if (a.empty() || b.empty()) throw InvalidInput("wasserstein_1d: empty sample");
  require_finite(a, "wasserstein_1d");
  require_finite(b, "wasserstein_1d");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end()), terms;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  return root(sorted_power_cost(sa, sb, order, terms), order);
}

double sliced_wasserstein(const PointSet& p, const PointSet& q, const SwdConfig& cfg) {
  require_order(cfg.order);
  if (cfg.projections == 0) throw InvalidInput("sliced_wasserstein: projections must be >= 1");
  if (p.dim() != q.dim()) {
    throw InvalidInput("sliced_wasserstein: dimension mismatch " +
                       std::to_string(p.dim()) + " vs " + std::to_string(q.dim()));
  }
  const Tensor dirs = sample_unit_directions(cfg.projections, p.dim(), Rng(cfg.seed));
  std::vector<double> pa(p.size()), qa(q.size()), terms;
  auto project = [](const PointSet& s, std::span<const double> g, std::vector<double>& out) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto x = s.point(i);
      double v = 0.0;
      for (std::size_t c = 0; c < g.size(); ++c) v += g[c] * x[c];
      out[i] = v;
    }
    std::sort(out.begin(), out.end());
  };
  // Running mean: J identical per-projection costs average to that cost exactly.
  double avg = 0.0;
  for (std::size_t j = 0; j < cfg.projections; ++j) {
    const auto g = dirs.row(j);
    project(p, g, pa);
    project(q, g, qa);
    const double c = sorted_power_cost(pa, qa, cfg.order, terms);
    avg += (c - avg) / static_cast<double>(j + 1);
  }
  return root(avg, cfg.order);
}

ad::DiffValue sliced_wasserstein(const ad::DiffValue& p, const ad::DiffValue& q,
                                 const Tensor& directions, int order) {
  require_order(order);
  const Tensor& pv = p.value();
  const Tensor& qv = q.value();
  if (pv.cols() != qv.cols() || directions.cols() != pv.cols()) {
    throw InvalidInput("sliced_wasserstein: dimension mismatch");
  }
  if (pv.rows() == 0 || qv.rows() == 0) throw InvalidInput("sliced_wasserstein: empty point set");
  const std::size_t j = directions.rows();
  const std::size_t dim = directions.cols();
  Tensor transposed({dim, j});
  for (std::size_t r = 0; r < j; ++r) {
    for (std::size_t c = 0; c < dim; ++c) transposed.at(c, r) = directions.at(r, c);
  }
  ad::Tape& tape = *p.tape();
  const auto g = tape.constant(std::move(transposed));
  const std::size_t m = std::max(pv.rows(), qv.rows());
  const auto sp = ad::sorted_quantiles(ad::matmul(p, g), m);
  const auto sq = ad::sorted_quantiles(ad::matmul(q, g), m);
  const auto cost = ad::mean(ad::abs_pow(ad::sub(sp, sq), order));
  return ad::pow_nonneg(cost, 1.0 / order);
}

std::vector<std::size_t> solve_assignment(const Tensor& cost) {
  const std::size_t n = cost.rows();
  if (cost.rank() != 2 || cost.cols() != n) {
    throw InvalidInput("solve_assignment: cost matrix must be square");
  }
  // Shortest augmenting path with potentials, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

double exact_wasserstein(const PointSet& p, const PointSet& q, int order) {
  require_order(order);
  if (p.dim() != q.dim()) throw InvalidInput("exact_wasserstein: dimension mismatch");
  if (p.size() != q.size()) {
    throw UnsupportedInstance("exact_wasserstein: point sets differ in size (" +
                              std::to_string(p.size()) + " vs " +
                              std::to_string(q.size()) + ")");
  }
  const std::size_t n = p.size();
  if (n > kExactWassersteinMaxPoints) {
    throw UnsupportedInstance("exact_wasserstein: " + std::to_string(n) +
                              " points exceeds the oracle limit of " +
                              std::to_string(kExactWassersteinMaxPoints));
  }
  Tensor cost({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      const auto a = p.point(i);
      const auto b = q.point(j);
      for (std::size_t c = 0; c < a.size(); ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
      cost.at(i, j) = order == 2 ? d2 : std::pow(std::sqrt(d2), order);
    }
  }
  const auto assignment = solve_assignment(cost);
  // Ascending summation keeps W(p, q) and W(q, p) bit-identical.
  std::vector<double> matched(n);
  for (std::size_t i = 0; i < n; ++i) matched[i] = cost.at(i, assignment[i]);
  std::sort(matched.begin(), matched.end());
  double total = 0.0;
  for (double c : matched) total += c;
  return root(std::max(0.0, total) / static_cast<double>(n), order);
}

}  // namespace mas3
