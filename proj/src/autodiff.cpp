#include "mas3/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mas3/error.hpp"

namespace mas3::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.raw(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.raw(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

Tape& tape_of(const DiffValue& a) {
  if (!a.valid()) throw InvalidInput("autodiff: unbound DiffValue");
  return *a.tape();
}

Tape& tape_of(const DiffValue& a, const DiffValue& b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw InvalidInput("autodiff: values from different tapes");
  return t;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidInput(std::string(op) + ": shape mismatch " +
                       shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

std::uint64_t fnv_step(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  return h;
}

}  // namespace

const Tensor& DiffValue::value() const { return tape_->value(id_); }
const Tensor& DiffValue::grad() const { return tape_->grad(id_); }

DiffValue Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true});
  return DiffValue(this, nodes_.size() - 1);
}

DiffValue Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false});
  return DiffValue(this, nodes_.size() - 1);
}

DiffValue Tape::push(Tensor value, std::span<const DiffValue> inputs,
                     BackwardFn backward) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || nodes_[in.id()].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : nullptr, needs});
  return DiffValue(this, nodes_.size() - 1);
}

Tensor& Tape::accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
    n.grad = Tensor::zeros(n.value.shape());
  }
  return n.grad;
}

const Tensor& Tape::grad(std::size_t id) { return accumulator(id); }

void Tape::record_branch(std::uint64_t h) {
  branch_signature_ = fnv_step(branch_signature_, h);
}

void Tape::backward(const DiffValue& loss) {
  if (loss.tape() != this) throw InvalidInput("backward: value from another tape");
  if (value(loss.id()).size() != 1) {
    throw InvalidInput("backward: loss must be a single element, got shape " +
                       shape_string(value(loss.id()).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  accumulator(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

DiffValue matmul(const DiffValue& a, const DiffValue& b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows() || bv.rank() != 2) {
    throw InvalidInput("matmul: incompatible shapes " + shape_string(av.shape()) +
                       " and " + shape_string(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  const std::size_t ia = a.id(), ib = b.id();
  const DiffValue in[] = {a, b};
  return t.push(std::move(out), in, [ia, ib](Tape& tp, std::size_t self) {
    const auto g = as_matrix(tp.upstream(self));
    if (tp.requires_grad(ia)) {
      as_matrix(tp.accumulator(ia)).noalias() += g * as_matrix(tp.value(ib)).transpose();
    }
    if (tp.requires_grad(ib)) {
      as_matrix(tp.accumulator(ib)).noalias() += as_matrix(tp.value(ia)).transpose() * g;
    }
  });
}

DiffValue add_row(const DiffValue& x, const DiffValue& bias) {
  Tape& t = tape_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw InvalidInput("add_row: bias of size " + std::to_string(bv.size()) +
                       " for " + std::to_string(xv.cols()) + " columns");
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  const std::size_t ix = x.id(), ib = bias.id();
  const DiffValue in[] = {x, bias};
  return t.push(std::move(out), in, [ix, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    if (tp.requires_grad(ix)) {
      Tensor& gx = tp.accumulator(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.accumulator(ib);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
      }
    }
  });
}

namespace {

DiffValue add_scaled(const DiffValue& a, const DiffValue& b, double sb,
                     const char* op) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), op);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sb * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  const DiffValue in[] = {a, b};
  return t.push(std::move(out), in, [ia, ib, sb](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.accumulator(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.accumulator(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sb * g[i];
    }
  });
}

}  // namespace

DiffValue add(const DiffValue& a, const DiffValue& b) {
  return add_scaled(a, b, 1.0, "add");
}

DiffValue sub(const DiffValue& a, const DiffValue& b) {
  return add_scaled(a, b, -1.0, "sub");
}

DiffValue scale(const DiffValue& x, double factor) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  const std::size_t ix = x.id();
  const DiffValue in[] = {x};
  return t.push(std::move(out), in, [ix, factor](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    Tensor& gx = tp.accumulator(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

DiffValue relu(const DiffValue& x) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  std::uint64_t h = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] > 0.0) {
      h = fnv_step(h, i);
    } else if (!std::isnan(out[i])) {  // NaN passes through
      out[i] = 0.0;
    }
  }
  t.record_branch(h);
  const std::size_t ix = x.id();
  const DiffValue in[] = {x};
  return t.push(std::move(out), in, [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const Tensor& xv = tp.value(ix);
    Tensor& gx = tp.accumulator(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

DiffValue softmax_rows(const DiffValue& x) {
  Tape& t = tape_of(x);
  // Non-finite logits poison the output so callers can report divergence.
  Tensor out = x.value().all_finite()
                   ? softmax(x.value())
                   : Tensor::filled(x.value().shape(), std::numeric_limits<double>::quiet_NaN());
  const std::size_t ix = x.id();
  const DiffValue in[] = {x};
  return t.push(std::move(out), in, [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.accumulator(ix);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
      auto gxr = gx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) gxr[c] += yr[c] * (gr[c] - dot);
    }
  });
}

DiffValue log_clamped(const DiffValue& x, double floor) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (auto& v : out.data()) v = std::log(std::max(v, floor));
  const std::size_t ix = x.id();
  const DiffValue in[] = {x};
  return t.push(std::move(out), in, [ix, floor](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const Tensor& xv = tp.value(ix);
    Tensor& gx = tp.accumulator(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > floor) gx[i] += g[i] / xv[i];
    }
  });
}

DiffValue pick(const DiffValue& x, std::span<const int> labels, int ignore) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  if (labels.size() != xv.rows()) {
    throw InvalidInput("pick: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(xv.rows()) + " rows");
  }
  std::vector<std::size_t> flat;
  flat.reserve(labels.size());
  const std::size_t k = xv.cols();
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const int y = labels[r];
    if (y == ignore) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw InvalidInput("pick: label " + std::to_string(y) + " outside [0, " +
                         std::to_string(k) + ")");
    }
    flat.push_back(r * k + static_cast<std::size_t>(y));
  }
  std::vector<double> vals(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) vals[i] = xv[flat[i]];
  const std::size_t ix = x.id();
  const DiffValue in[] = {x};
  return t.push(Tensor::vector(std::move(vals)), in,
                [ix, flat = std::move(flat)](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.upstream(self);
                  Tensor& gx = tp.accumulator(ix);
                  for (std::size_t i = 0; i < flat.size(); ++i) gx[flat[i]] += g[i];
                });
}

DiffValue sum(const DiffValue& x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t ix = x.id();
  const DiffValue in[] = {x};
  return t.push(Tensor::scalar(s), in, [ix](Tape& tp, std::size_t self) {
    const double g = tp.upstream(self)[0];
    for (auto& v : tp.accumulator(ix).data()) v += g;
  });
}

DiffValue mean(const DiffValue& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw InvalidInput("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

DiffValue abs_pow(const DiffValue& x, double p) {
  if (!(p >= 1.0)) throw InvalidInput("abs_pow: exponent must be >= 1");
  Tape& t = tape_of(x);
  Tensor out = x.value();
  std::uint64_t h = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = out[i];
    if (p == 1.0) h = fnv_step(h, (v > 0.0) ? 2 * i : 2 * i + 1);
    out[i] = (p == 2.0) ? v * v : std::pow(std::abs(v), p);
  }
  if (p == 1.0) t.record_branch(h);
  const std::size_t ix = x.id();
  const DiffValue in[] = {x};
  return t.push(std::move(out), in, [ix, p](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const Tensor& xv = tp.value(ix);
    Tensor& gx = tp.accumulator(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      double d;
      if (p == 2.0) {
        d = 2.0 * v;
      } else if (v == 0.0) {
        d = 0.0;
      } else {
        d = p * std::pow(std::abs(v), p - 1.0) * (v > 0.0 ? 1.0 : -1.0);
      }
      gx[i] += g[i] * d;
    }
  });
}

DiffValue pow_nonneg(const DiffValue& x, double p) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (auto& v : out.data()) {
    if (v < 0.0) throw InvalidInput("pow_nonneg: negative base");
    v = std::pow(v, p);
  }
  const std::size_t ix = x.id();
  const DiffValue in[] = {x};
  return t.push(std::move(out), in, [ix, p](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    const Tensor& xv = tp.value(ix);
    Tensor& gx = tp.accumulator(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double d = (v == 0.0 && p < 1.0) ? 0.0 : p * std::pow(v, p - 1.0);
      gx[i] += g[i] * d;
    }
  });
}

DiffValue sorted_quantiles(const DiffValue& x, std::size_t m) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows();
  const std::size_t cols = xv.cols();
  if (n == 0 || m == 0) throw InvalidInput("sorted_quantiles: empty input");
  // Rows of x feeding out[i][j]; equal when the read is a single sample.
  std::vector<std::size_t> lo(m * cols), hi(m * cols);
  Tensor out({m, cols});
  std::vector<std::size_t> order(n);
  std::vector<double> column(n), sorted(n);
  std::uint64_t h = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t r = 0; r < n; ++r) column[r] = xv[r * cols + j];
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return column[a] < column[b]; });
    for (std::size_t r = 0; r < n; ++r) {
      h = fnv_step(h, order[r]);
      sorted[r] = column[order[r]];
    }
    for (std::size_t i = 0; i < m; ++i) {
      const QuantileRead q = quantile_read(i, n, m);
      lo[i * cols + j] = order[q.lo];
      hi[i * cols + j] = order[q.hi];
      out[i * cols + j] = quantile_value(sorted.data(), i, n, m);
    }
  }
  t.record_branch(h);
  const std::size_t ix = x.id();
  const DiffValue in[] = {x};
  return t.push(std::move(out), in,
                [ix, cols, lo = std::move(lo), hi = std::move(hi)](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.upstream(self);
                  Tensor& gx = tp.accumulator(ix);
                  for (std::size_t k = 0; k < lo.size(); ++k) {
                    if (lo[k] == hi[k]) {
                      gx[lo[k] * cols + k % cols] += g[k];
                    } else {
                      gx[lo[k] * cols + k % cols] += 0.5 * g[k];
                      gx[hi[k] * cols + k % cols] += 0.5 * g[k];
                    }
                  }
                });
}

}  // namespace mas3::ad
