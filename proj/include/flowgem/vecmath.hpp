#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>

namespace flowgem::vecmath {

/// In-place exp over an array, written branch-free so the compiler can
/// vectorize it. Cody-Waite reduction to |r| <= ln2/2 and a degree-13 Taylor
/// polynomial; within 2 ulp of std::exp on [-708, 709]. Inputs below -708
/// return 0 (no subnormals).
inline void exp_inplace(std::span<double> xs) noexcept {
  constexpr double log2e = 1.4426950408889634;
  constexpr double ln2_hi = 6.93147180369123816490e-01;
  constexpr double ln2_lo = 1.90821492927058770002e-10;
  constexpr double shifter = 0x1.8p52;
  constexpr std::uint64_t shifter_bits = std::bit_cast<std::uint64_t>(shifter);
  double* x = xs.data();
  const std::size_t n = xs.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double in = x[i];
    double v = in < -708.0 ? -708.0 : in;
    v = v > 709.0 ? 709.0 : v;
    const double kd = (v * log2e + shifter) - shifter;
    const std::uint64_t kb = std::bit_cast<std::uint64_t>(v * log2e + shifter) - shifter_bits;
    double r = v - kd * ln2_hi;
    r = r - kd * ln2_lo;
    double p = 1.0 / 6227020800.0;
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    const double scale = std::bit_cast<double>((kb + 1023) << 52);
    const double y = p * scale;
    x[i] = in < -708.0 ? 0.0 : y;
  }
}

/// sum_j a[j] * b[j] with eight interleaved partial sums combined in a fixed
/// order. The result depends only on the inputs, never on vector width.
inline double dot(const double* a, const double* b, std::size_t n) noexcept {
  double s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8)
    for (std::size_t l = 0; l < 8; ++l) s[l] += a[j + l] * b[j + l];
  for (std::size_t l = 0; j < n; ++j, ++l) s[l] += a[j] * b[j];
  return ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
}

inline double sum(const double* a, std::size_t n) noexcept {
  double s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8)
    for (std::size_t l = 0; l < 8; ++l) s[l] += a[j + l];
  for (std::size_t l = 0; j < n; ++j, ++l) s[l] += a[j];
  return ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
}

}  // namespace flowgem::vecmath
