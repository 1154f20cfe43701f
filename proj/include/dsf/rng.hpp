#pragma once

#include <cstdint>

#include "dsf/array.hpp"

namespace dsf::inline DSF_PREC {

/// Counter-based random stream. Draw n of a stream is SplitMix64 evaluated at
/// state seed + n * golden-gamma, so (seed, counter) fully determines every
/// future draw on any platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  /// Independent stream for a worker, scene, or hypothesis.
  static RngStream derive(std::uint64_t root_seed, std::uint64_t stream_id) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal() noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  bool operator==(const RngStream&) const = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// I.i.d. standard normal array.
Array gaussian(RngStream& rng, const Shape& shape);

}  // namespace dsf::inline DSF_PREC
