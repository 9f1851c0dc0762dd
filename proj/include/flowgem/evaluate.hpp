#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "flowgem/dataset.hpp"
#include "flowgem/error.hpp"
#include "flowgem/kernel.hpp"
#include "flowgem/matrix.hpp"
#include "flowgem/parallel.hpp"

namespace flowgem {

namespace detail {

// Row-major lexicographic comparison, used to fix an argument order.
inline bool matrix_less(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  auto x = a.data(), y = b.data();
  return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
}

// sum_i sum_j |x_i - y_j|, reduced row by row in index order.
inline double cross_distance_sum(const Matrix& x, const Matrix& y, unsigned threads) {
  std::vector<double> partial(x.rows(), 0.0);
  parallel_for(x.rows(), threads, [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < y.rows(); ++j) s += std::sqrt(squared_distance(x.row(i), y.row(j)));
    partial[i] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

// sum over ordered pairs i != j of |x_i - x_j| (twice the unordered sum).
inline double within_distance_sum(const Matrix& x, unsigned threads) {
  std::vector<double> partial(x.rows(), 0.0);
  parallel_for(x.rows(), threads, [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = i + 1; j < x.rows(); ++j) s += std::sqrt(squared_distance(x.row(i), x.row(j)));
    partial[i] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return 2.0 * total;
}

struct EnergyTerms {
  double cross, within_x, within_y;
  double a, b;
};

inline EnergyTerms energy_terms(const Matrix& x, const Matrix& y, unsigned threads) {
  if (x.cols() != y.cols())
    throw DataError(DataErrc::dimension_mismatch, "energy_distance: samples have different widths");
  if (x.rows() < 2 || y.rows() < 2)
    throw DataError(DataErrc::invalid_argument, "energy_distance: each sample needs >= 2 rows");
  return {cross_distance_sum(x, y, threads), within_distance_sum(x, threads),
          within_distance_sum(y, threads), static_cast<double>(x.rows()),
          static_cast<double>(y.rows())};
}

}  // namespace detail

/// Plug-in (V-statistic) squared energy distance
///   2/(ab) sum |x_i - y_j| - 1/a^2 sum |x_i - x_i'| - 1/b^2 sum |y_j - y_j'|.
/// Arguments are put in a canonical order first so the result is exactly
/// symmetric.
inline double energy_distance(const Matrix& x, const Matrix& y, unsigned threads = 1) {
  if (detail::matrix_less(y, x)) return energy_distance(y, x, threads);
  const auto t = detail::energy_terms(x, y, threads);
  return 2.0 * t.cross / (t.a * t.b) - t.within_x / (t.a * t.a) - t.within_y / (t.b * t.b);
}

/// Unbiased (U-statistic) variant; may be slightly negative.
inline double energy_distance_unbiased(const Matrix& x, const Matrix& y, unsigned threads = 1) {
  if (detail::matrix_less(y, x)) return energy_distance_unbiased(y, x, threads);
  const auto t = detail::energy_terms(x, y, threads);
  return 2.0 * t.cross / (t.a * t.b) - t.within_x / (t.a * (t.a - 1.0)) -
         t.within_y / (t.b * (t.b - 1.0));
}

struct EnergyReport {
  enum class Source { heldout, external };
  double e2 = 0.0;
  double e2_unbiased = 0.0;
  std::size_t n_x = 0, n_y = 0;
  Source standardizer_source = Source::heldout;
};

/// Energy distance after standardizing both samples with the column means and
/// standard deviations of the complete held-out sample (or of `external`).
inline EnergyReport standardized_energy(const Matrix& generated, const Matrix& heldout,
                                        const Standardizer* external = nullptr,
                                        unsigned threads = 1) {
  if (generated.cols() != heldout.cols())
    throw DataError(DataErrc::dimension_mismatch, "standardized_energy: samples have different widths");
  const Standardizer s = external ? *external : fit_standardizer(heldout);
  const Matrix gx = s.apply(generated, Direction::forward);
  const Matrix hy = s.apply(heldout, Direction::forward);
  EnergyReport r;
  r.e2 = energy_distance(gx, hy, threads);
  r.e2_unbiased = energy_distance_unbiased(gx, hy, threads);
  r.n_x = generated.rows();
  r.n_y = heldout.rows();
  r.standardizer_source = external ? EnergyReport::Source::external : EnergyReport::Source::heldout;
  return r;
}

/// Order-statistic quantile with linear interpolation at position (len-1)*q.
inline double quantile(std::vector<double> sample, double q) {
  if (sample.empty()) throw DataError(DataErrc::invalid_argument, "quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DataError(DataErrc::invalid_argument, "quantile level outside [0, 1]");
  std::sort(sample.begin(), sample.end());
  const double pos = static_cast<double>(sample.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sample.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sample[lo];
  return sample[lo] + frac * (sample[hi] - sample[lo]);
}

}  // namespace flowgem
