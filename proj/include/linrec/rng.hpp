#pragma once

// Counter-based pseudo-random generator. The draw sequence is a pure
// function of (seed, counter) over fixed-width integer ops, so identical
// seeds give identical streams on every platform. split() derives an
// independent stream for a named substream (parameters vs data, etc).

#include <cstdint>

#include "linrec/common.hpp"
#include "linrec/tensor.hpp"

namespace linrec {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    // splitmix64 step
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Independent stream keyed by `stream`; drawing from the child never
  /// perturbs the parent.
  Rng split(std::uint64_t stream) const {
    std::uint64_t z = seed_ ^ (0xD1B54A32D192ED03ULL * (stream + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
  }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  bool coin() { return (next_u64() & 1u) != 0; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

/// Entries i.i.d. uniform on [-scale, +scale]; reproducible from the seed.
template <class S>
Tensor2<S> init_uniform(Rng& rng, index_t rows, index_t cols, double scale) {
  if (!(scale > 0)) contract_fail("init_uniform: scale must be > 0");
  Tensor2<S> t(rows, cols);
  for (auto& v : t.data) v = S(rng.uniform(-scale, scale));
  return t;
}

template <class S>
void fill_uniform(Rng& rng, Tensor3<S>& t, double lo, double hi) {
  for (auto& v : t.data) v = S(rng.uniform(lo, hi));
}

template <class S>
void fill_uniform(Rng& rng, Tensor2<S>& t, double lo, double hi) {
  for (auto& v : t.data) v = S(rng.uniform(lo, hi));
}

}  // namespace linrec
