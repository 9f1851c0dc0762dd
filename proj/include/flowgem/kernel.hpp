#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "flowgem/error.hpp"
#include "flowgem/matrix.hpp"
#include "flowgem/rng.hpp"

namespace flowgem {

/// RBF kernel bandwidth. Always positive and finite.
class Bandwidth {
 public:
  explicit Bandwidth(double sigma) : sigma_(sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw DataError(DataErrc::invalid_argument,
                      "bandwidth must be positive and finite, got " + std::to_string(sigma));
  }
  double value() const noexcept { return sigma_; }

  /// 1 / (2 sigma^2), the factor applied to squared distances.
  double inv_two_sigma_sq() const noexcept { return 1.0 / (2.0 * sigma_ * sigma_); }

 private:
  double sigma_;
};

inline double squared_distance(std::span<const double> x, std::span<const double> y) noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = x[k] - y[k];
    s += diff * diff;
  }
  return s;
}

/// exp(-|x - y|^2 / (2 sigma^2)).
inline double rbf_kernel(std::span<const double> x, std::span<const double> y, Bandwidth sigma) {
  if (x.size() != y.size() || x.empty())
    throw DataError(DataErrc::dimension_mismatch, "rbf_kernel: vectors must have equal, nonzero length");
  for (std::size_t k = 0; k < x.size(); ++k)
    if (!std::isfinite(x[k]) || !std::isfinite(y[k]))
      throw DataError(DataErrc::invalid_argument, "rbf_kernel: non-finite input");
  return std::exp(-squared_distance(x, y) * sigma.inv_two_sigma_sq());
}

inline constexpr std::size_t median_heuristic_cap = 2000;

/// Median of all pairwise Euclidean distances between rows (lower middle for
/// an even count). Samples with more than 2000 rows are first reduced to a
/// seeded uniform subsample of 2000 rows drawn without replacement.
inline Bandwidth median_heuristic(const Matrix& sample, std::uint64_t seed = 0) {
  const std::size_t m = sample.rows();
  if (m < 2) throw DataError(DataErrc::invalid_argument, "median_heuristic needs at least 2 rows");
  for (double v : sample.data())
    if (!std::isfinite(v)) throw DataError(DataErrc::invalid_argument, "median_heuristic: non-finite input");

  std::vector<std::size_t> rows(m);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (m > median_heuristic_cap) {
    CounterRng rng(seed, Stream::subsample);
    for (std::size_t k = 0; k < median_heuristic_cap; ++k)
      std::swap(rows[k], rows[k + rng.index(m - k)]);
    rows.resize(median_heuristic_cap);
    std::sort(rows.begin(), rows.end());
  }

  std::vector<double> dist;
  dist.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = a + 1; b < rows.size(); ++b)
      dist.push_back(std::sqrt(squared_distance(sample.row(rows[a]), sample.row(rows[b]))));

  const auto mid = dist.begin() + static_cast<std::ptrdiff_t>((dist.size() - 1) / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  if (!(*mid > 0.0))
    throw DataError(DataErrc::zero_variance, "median_heuristic: median pairwise distance is zero");
  return Bandwidth(*mid);
}

}  // namespace flowgem
