#pragma once

#include <cstdint>
#include <random>

namespace iqcmhe {

// Deterministic, stream-splittable generator. The uniform mapping is done by
// hand from the raw 64-bit output so that results do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    std::seed_seq seq{seed, stream, std::uint64_t{0x9e3779b97f4a7c15ULL}};
    engine_.seed(seq);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Derived independent stream; deterministic in (seed, this stream, child id).
  Rng split(std::uint64_t child) const {
    return Rng(seed_, stream_ * 0x100000001b3ULL + child + 1);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace iqcmhe
