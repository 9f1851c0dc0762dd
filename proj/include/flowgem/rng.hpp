#pragma once

#include <cstdint>
#include <limits>

namespace flowgem {

// Independent draw sequences. Each purpose gets its own stream so that adding
// or reordering work in one stage never shifts the draws seen by another.
enum class Stream : std::uint64_t {
  initialization = 1,
  subsample = 2,
  simulation = 3,
  heldout = 4,
  amputation = 5,
  mechanism = 6,
  resample = 7,
};

inline constexpr std::uint64_t splitmix_finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: output k is a bijective mix of (key + k * gamma),
/// where the key is derived from (seed, stream). Satisfies
/// UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;
  static constexpr std::uint64_t gamma = 0x9e3779b97f4a7c15ULL;

  CounterRng(std::uint64_t seed, Stream stream, std::uint64_t substream = 0) noexcept
      : key_(splitmix_finalize(splitmix_finalize(seed + gamma) ^
                               splitmix_finalize(static_cast<std::uint64_t>(stream) * gamma +
                                                 substream))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return splitmix_finalize(key_ + gamma * ++counter_); }

  std::uint64_t counter() const noexcept { return counter_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t index(std::uint64_t n) noexcept {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do {
      x = (*this)();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace flowgem
