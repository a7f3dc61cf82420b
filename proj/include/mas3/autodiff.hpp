#pragma once

// Minimal tensor-level reverse-mode differentiation.
//
// A Tape records every value produced by the primitives below together with a
// closure that propagates its gradient to its inputs. All tensors are treated
// as matrices (rows x last-axis). Only the primitives needed by the
// segmentation network and the two adaptation losses are provided.

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "mas3/tensor.hpp"

namespace mas3::ad {

class Tape;

// Handle to a node recorded on a Tape.
class DiffValue {
 public:
  DiffValue() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  DiffValue(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf whose gradient is tracked.
  DiffValue variable(Tensor value);
  // Leaf with no gradient.
  DiffValue constant(Tensor value);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  // `loss` must hold a single element.
  void backward(const DiffValue& loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  // Gradient of the last backward pass; zeros if the node got none.
  const Tensor& grad(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Hash of every discrete branch taken while recording (sort permutations,
  // relu activation masks). Two evaluations with equal signatures lie on the
  // same smooth piece of the function.
  std::uint64_t branch_signature() const { return branch_signature_; }
  void record_branch(std::uint64_t h);

  // Primitive implementation interface.
  DiffValue push(Tensor value, std::span<const DiffValue> inputs,
                 BackwardFn backward);
  Tensor& accumulator(std::size_t id);
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  std::uint64_t branch_signature_ = 0x84222325CBF29CE4ULL;
};

// Primitives. Shapes: `n x k` means rows x cols of the matrix view.
DiffValue matmul(const DiffValue& a, const DiffValue& b);        // (n x k)(k x m)
DiffValue add_row(const DiffValue& x, const DiffValue& bias);    // (n x m) + (m)
DiffValue add(const DiffValue& a, const DiffValue& b);
DiffValue sub(const DiffValue& a, const DiffValue& b);
DiffValue scale(const DiffValue& x, double factor);
DiffValue relu(const DiffValue& x);
DiffValue softmax_rows(const DiffValue& x);
DiffValue log_clamped(const DiffValue& x, double floor);
// out[i] = x[row_i, labels[row_i]] over rows whose label != ignore.
DiffValue pick(const DiffValue& x, std::span<const int> labels, int ignore);
DiffValue sum(const DiffValue& x);
DiffValue mean(const DiffValue& x);
// Elementwise |x|^p, p >= 1.
DiffValue abs_pow(const DiffValue& x, double p);
// Elementwise x^p for x >= 0; the derivative at 0 is taken as 0 when p < 1.
DiffValue pow_nonneg(const DiffValue& x, double p);
// Sorts every column ascending and reads it at the m quantile levels
// (i + 1/2) / m with the step inverse CDF. m == rows gives the plain sort.
DiffValue sorted_quantiles(const DiffValue& x, std::size_t m);

// Sorted positions the step inverse CDF of an n-sample column reads at level
// (i + 1/2) / m. A level that falls exactly on a jump takes the midpoint of
// the two neighbours (lo != hi), which keeps the read mirror-symmetric.
struct QuantileRead {
  std::size_t lo;
  std::size_t hi;
};

inline QuantileRead quantile_read(std::size_t i, std::size_t n, std::size_t m) {
  const std::size_t num = (2 * i + 1) * n, den = 2 * m;
  const std::size_t k = num / den;
  if (num % den == 0 && k > 0) return {k - 1, k};
  return {k, k};
}

// Value of quantile_read on an ascending sample.
inline double quantile_value(const double* sorted, std::size_t i, std::size_t n, std::size_t m) {
  const QuantileRead q = quantile_read(i, n, m);
  return q.lo == q.hi ? sorted[q.lo] : 0.5 * (sorted[q.lo] + sorted[q.hi]);
}

}  // namespace mas3::ad
