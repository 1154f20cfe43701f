#include "dsf/rng.hpp"

#include <cmath>
#include <numbers>

namespace dsf::inline DSF_PREC {

namespace {
constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RngStream RngStream::derive(std::uint64_t root_seed, std::uint64_t stream_id) noexcept {
  return RngStream(splitmix64(root_seed ^ splitmix64(stream_id + kGoldenGamma)));
}

std::uint64_t RngStream::next_u64() noexcept {
  ++counter_;
  return splitmix64(seed_ + counter_ * kGoldenGamma);
}

double RngStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) noexcept {
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double RngStream::normal() noexcept {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Array gaussian(RngStream& rng, const Shape& shape) {
  Array out(shape);
  for (auto& v : out.values()) v = static_cast<Real>(rng.normal());
  return out;
}

}  // namespace dsf::inline DSF_PREC
