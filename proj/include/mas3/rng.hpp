#pragma once

#include <cstdint>
#include <span>

namespace mas3 {

// Counter-based generator: the n-th draw of a stream is a pure function of
// (key, n), so forked streams can be consumed in any order or in parallel
// without changing results.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), key_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    return mix(key_ + 0x9E3779B97F4A7C15ULL * ++counter_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  // Uniform on (0, 1).
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  // Index drawn with probability proportional to weights (need not be
  // normalized; must have a positive sum).
  std::size_t categorical(std::span<const double> weights);

  // Independent stream identified by `index`; does not advance this stream.
  Rng fork(std::uint64_t index) const {
    Rng r(seed_);
    r.key_ = mix(key_ ^ mix(index + 0xD1B54A32D192ED03ULL));
    return r;
  }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mas3
