#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowgem/dataset.hpp"
#include "flowgem/error.hpp"
#include "flowgem/kernel.hpp"
#include "flowgem/matrix.hpp"
#include "flowgem/vecmath.hpp"

namespace flowgem {

/// Normal equations of the kernel-weighted local linear fit g(x) = w'x + b
/// at one query point, for one missingness pattern.
///
/// With weights k_i = k_sigma(x_i, q) on the d_m observed coordinates:
///
///   A = (1/n_tilde) sum_i k_i [x_i x_i'  x_i; x_i'  1]   over the ensemble
///   c = (1/n_m)     sum_i k_i [x_i; 1]                    over the target rows
///
/// and (w, b) solves A (w, b)' = c. A is stored dense, row-major, of size
/// (d_m + 1)^2, with the intercept in the last row and column.
struct LocalLinearSystem {
  std::size_t d_m = 0;
  std::vector<double> A;
  std::vector<double> c;

  std::size_t size() const noexcept { return d_m + 1; }
  double a(std::size_t r, std::size_t s) const { return A[r * size() + s]; }

  /// Sum of ensemble-side kernel weights / n_tilde (the bottom-right entry).
  double ensemble_mass() const { return a(d_m, d_m); }
};

/// A sample in a d_m-dimensional sub-space stored column by column, plus the
/// products x_a * x_b (a <= b) when second moments are needed.
class MomentFeatures {
 public:
  MomentFeatures(const Matrix& rows, bool with_products) : n_(rows.rows()), p_(rows.cols()) {
    const std::size_t cols = p_ + (with_products ? p_ * (p_ + 1) / 2 : 0);
    data_.resize(cols * n_);
    for (std::size_t i = 0; i < n_; ++i) {
      auto x = rows.row(i);
      for (std::size_t k = 0; k < p_; ++k) data_[k * n_ + i] = x[k];
    }
    if (with_products) {
      for (std::size_t a = 0; a < p_; ++a)
        for (std::size_t b = a; b < p_; ++b) {
          double* dst = data_.data() + product_col(a, b) * n_;
          const double* xa = coord(a);
          const double* xb = coord(b);
          for (std::size_t i = 0; i < n_; ++i) dst[i] = xa[i] * xb[i];
        }
    }
    has_products_ = with_products;
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t p() const noexcept { return p_; }
  bool has_products() const noexcept { return has_products_; }
  const double* coord(std::size_t k) const noexcept { return data_.data() + k * n_; }
  const double* product(std::size_t a, std::size_t b) const noexcept {
    return data_.data() + product_col(a, b) * n_;
  }

 private:
  // Columns p.. hold the upper triangle of x x' row by row.
  std::size_t product_col(std::size_t a, std::size_t b) const noexcept {
    return p_ + a * p_ - a * (a - 1) / 2 + (b - a);
  }

  std::size_t n_, p_;
  bool has_products_ = false;
  std::vector<double> data_;
};

namespace detail {

// w[j] = exp(-|x_j - q|^2 / (2 sigma^2)) for every row of `f`.
inline void kernel_weights(const MomentFeatures& f, std::span<const double> query, double inv_2s2,
                           std::vector<double>& w) {
  const std::size_t n = f.n();
  w.assign(n, 0.0);
  double* wp = w.data();
  for (std::size_t k = 0; k < f.p(); ++k) {
    const double* x = f.coord(k);
    const double q = query[k];
    for (std::size_t j = 0; j < n; ++j) {
      const double diff = x[j] - q;
      wp[j] += diff * diff;
    }
  }
  for (std::size_t j = 0; j < n; ++j) wp[j] = -(wp[j] * inv_2s2);
  vecmath::exp_inplace(w);
}

}  // namespace detail

/// Builds the local linear system from the target rows of one pattern and the
/// ensemble, both already restricted to that pattern's observed columns.
/// `ensemble` must carry second-moment products. `scratch` is a reusable
/// weight buffer.
inline LocalLinearSystem assemble_system(const MomentFeatures& target, const MomentFeatures& ensemble,
                                         std::span<const double> query_sub, Bandwidth sigma,
                                         std::vector<double>& scratch) {
  const std::size_t p = query_sub.size();
  if (p == 0) throw DataError(DataErrc::invalid_argument, "assemble_system: d_m must be >= 1");
  if (target.p() != p || ensemble.p() != p)
    throw DataError(DataErrc::dimension_mismatch, "assemble_system: sub-space dimensions differ");
  if (target.n() == 0 || ensemble.n() == 0)
    throw DataError(DataErrc::invalid_argument, "assemble_system: empty sample");
  if (!ensemble.has_products())
    throw DataError(DataErrc::invalid_argument, "assemble_system: ensemble features lack products");

  const double inv_2s2 = sigma.inv_two_sigma_sq();
  const std::size_t s = p + 1;
  LocalLinearSystem sys;
  sys.d_m = p;
  sys.A.assign(s * s, 0.0);
  sys.c.assign(s, 0.0);

  const double inv_nt = 1.0 / static_cast<double>(ensemble.n());
  detail::kernel_weights(ensemble, query_sub, inv_2s2, scratch);
  const double* w = scratch.data();
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = a; b < p; ++b) {
      const double v = vecmath::dot(w, ensemble.product(a, b), ensemble.n()) * inv_nt;
      sys.A[a * s + b] = v;
      sys.A[b * s + a] = v;
    }
    const double v = vecmath::dot(w, ensemble.coord(a), ensemble.n()) * inv_nt;
    sys.A[a * s + p] = v;
    sys.A[p * s + a] = v;
  }
  sys.A[p * s + p] = vecmath::sum(w, ensemble.n()) * inv_nt;

  const double inv_nm = 1.0 / static_cast<double>(target.n());
  detail::kernel_weights(target, query_sub, inv_2s2, scratch);
  w = scratch.data();
  for (std::size_t a = 0; a < p; ++a) sys.c[a] = vecmath::dot(w, target.coord(a), target.n()) * inv_nm;
  sys.c[p] = vecmath::sum(w, target.n()) * inv_nm;

  for (double v : sys.A)
    if (!std::isfinite(v)) throw NumericalError("assemble_system: non-finite accumulation");
  for (double v : sys.c)
    if (!std::isfinite(v)) throw NumericalError("assemble_system: non-finite accumulation");
  return sys;
}

inline LocalLinearSystem assemble_system(const Matrix& target_rows, const Matrix& ensemble_sub,
                                         std::span<const double> query_sub, Bandwidth sigma) {
  if (target_rows.cols() != query_sub.size() || ensemble_sub.cols() != query_sub.size())
    throw DataError(DataErrc::dimension_mismatch, "assemble_system: sub-space dimensions differ");
  std::vector<double> scratch;
  return assemble_system(MomentFeatures(target_rows, false), MomentFeatures(ensemble_sub, true),
                         query_sub, sigma, scratch);
}

inline LocalLinearSystem assemble_system(const PatternGroup& group, const Matrix& ensemble_sub,
                                         std::span<const double> query_sub, Bandwidth sigma) {
  return assemble_system(group.rows, ensemble_sub, query_sub, sigma);
}

/// Slope and intercept of the local linear fit.
struct LocalFit {
  std::vector<double> w;
  double b = 0.0;
};

/// Solves (A + eps I)(w, b)' = c by Gaussian elimination with partial
/// pivoting followed by one step of iterative refinement.
inline LocalFit solve_system(const LocalLinearSystem& sys, double epsilon) {
  if (!(epsilon >= 0.0)) throw DataError(DataErrc::invalid_argument, "solve_system: epsilon must be >= 0");
  const std::size_t s = sys.size();
  std::vector<double> a = sys.A;
  for (std::size_t r = 0; r < s; ++r) a[r * s + r] += epsilon;
  const std::vector<double> a_reg = a;

  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));

  const double tiny = std::numeric_limits<double>::epsilon() * static_cast<double>(s);
  std::vector<std::size_t> perm(s);
  for (std::size_t r = 0; r < s; ++r) perm[r] = r;

  // In-place LU with row pivoting: a = P^-1 L U.
  for (std::size_t k = 0; k < s; ++k) {
    std::size_t piv = k;
    for (std::size_t r = k + 1; r < s; ++r)
      if (std::abs(a[r * s + k]) > std::abs(a[piv * s + k])) piv = r;
    if (!(std::abs(a[piv * s + k]) > scale * tiny) || !std::isfinite(a[piv * s + k]))
      throw NumericalError("solve_system: matrix is singular (bandwidth too small?)");
    if (piv != k) {
      for (std::size_t q = 0; q < s; ++q) std::swap(a[k * s + q], a[piv * s + q]);
      std::swap(perm[k], perm[piv]);
    }
    const double inv = 1.0 / a[k * s + k];
    for (std::size_t r = k + 1; r < s; ++r) {
      const double f = a[r * s + k] * inv;
      a[r * s + k] = f;
      if (f == 0.0) continue;
      for (std::size_t q = k + 1; q < s; ++q) a[r * s + q] -= f * a[k * s + q];
    }
  }

  auto lu_solve = [&](const std::vector<double>& rhs) {
    std::vector<double> y(s);
    for (std::size_t r = 0; r < s; ++r) {
      double v = rhs[perm[r]];
      for (std::size_t q = 0; q < r; ++q) v -= a[r * s + q] * y[q];
      y[r] = v;
    }
    for (std::size_t r = s; r-- > 0;) {
      double v = y[r];
      for (std::size_t q = r + 1; q < s; ++q) v -= a[r * s + q] * y[q];
      y[r] = v / a[r * s + r];
    }
    return y;
  };

  std::vector<double> z = lu_solve(sys.c);
  std::vector<double> resid(s);
  for (std::size_t r = 0; r < s; ++r) {
    double v = sys.c[r];
    for (std::size_t q = 0; q < s; ++q) v -= a_reg[r * s + q] * z[q];
    resid[r] = v;
  }
  const std::vector<double> dz = lu_solve(resid);
  for (std::size_t r = 0; r < s; ++r) z[r] += dz[r];

  for (double v : z)
    if (!std::isfinite(v)) throw NumericalError("solve_system: non-finite solution");

  LocalFit fit;
  fit.b = z[s - 1];
  z.pop_back();
  fit.w = std::move(z);
  return fit;
}

/// The local fit for one pattern, with w zero-padded back to d coordinates.
struct PatternVelocity {
  std::vector<double> w_padded;
  double b = 0.0;
  bool ensemble_underflow = false;  // every ensemble-side kernel weight was 0
};

/// Target rows of every group in feature layout. Built once per run.
class PreparedTargets {
 public:
  explicit PreparedTargets(const std::vector<PatternGroup>& groups) {
    feats_.reserve(groups.size());
    for (const auto& g : groups) feats_.emplace_back(g.rows, false);
  }
  const MomentFeatures& operator[](std::size_t g) const { return feats_[g]; }
  std::size_t size() const noexcept { return feats_.size(); }

 private:
  std::vector<MomentFeatures> feats_;
};

/// The ensemble restricted to each group's observed columns, in feature
/// layout. Built once per flow step and shared by every query of that step.
class PreparedEnsemble {
 public:
  PreparedEnsemble(const std::vector<PatternGroup>& groups, const Matrix& ensemble) : d_(ensemble.cols()) {
    feats_.reserve(groups.size());
    for (const auto& g : groups) {
      if (g.pattern.d() != d_)
        throw DataError(DataErrc::dimension_mismatch, "pattern width does not match ensemble");
      feats_.emplace_back(select_columns(ensemble, g.pattern.observed_idx), true);
    }
  }
  std::size_t d() const noexcept { return d_; }
  const MomentFeatures& operator[](std::size_t g) const { return feats_[g]; }

 private:
  std::size_t d_;
  std::vector<MomentFeatures> feats_;
};

namespace detail {

inline PatternVelocity solve_pattern(const Pattern& pattern, const MomentFeatures& target,
                                     const MomentFeatures& ensemble, std::span<const double> query,
                                     Bandwidth sigma, double epsilon, std::vector<double>& scratch) {
  const auto& idx = pattern.observed_idx;
  std::vector<double> q_sub(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) q_sub[k] = query[idx[k]];
  const LocalLinearSystem sys = assemble_system(target, ensemble, q_sub, sigma, scratch);
  LocalFit fit = solve_system(sys, epsilon);
  PatternVelocity pv;
  pv.w_padded.assign(query.size(), 0.0);
  for (std::size_t k = 0; k < idx.size(); ++k) pv.w_padded[idx[k]] = fit.w[k];
  pv.b = fit.b;
  pv.ensemble_underflow = sys.ensemble_mass() == 0.0;
  return pv;
}

}  // namespace detail

/// Local linear gradient estimate for one pattern at `query` (length d).
/// Coordinates missing under the pattern are exactly zero.
inline PatternVelocity pattern_velocity(const PatternGroup& group, const Matrix& ensemble,
                                        std::span<const double> query, Bandwidth sigma,
                                        double epsilon) {
  if (ensemble.cols() != query.size() || group.pattern.d() != query.size())
    throw DataError(DataErrc::dimension_mismatch, "pattern_velocity: dimension mismatch");
  if (group.n_m() == 0) throw DataError(DataErrc::invalid_argument, "pattern_velocity: empty group");
  std::vector<double> scratch;
  return detail::solve_pattern(group.pattern, MomentFeatures(group.rows, false),
                               MomentFeatures(select_columns(ensemble, group.pattern.observed_idx), true),
                               query, sigma, epsilon, scratch);
}

struct VelocityResult {
  std::vector<double> v;
  std::size_t underflow_patterns = 0;
  // Filled only when diagnostics are requested, one entry per group.
  std::optional<std::vector<PatternVelocity>> per_pattern;
};

/// v = sum over groups of (n_m / n) * w_padded, with n = sum of n_m.
inline VelocityResult aggregate_velocity(const std::vector<PatternGroup>& groups,
                                         const PreparedTargets& targets,
                                         const PreparedEnsemble& ensemble,
                                         std::span<const double> query, Bandwidth sigma,
                                         double epsilon, bool diagnostics = false) {
  const std::size_t n = total_rows(groups);
  if (n == 0) throw DataError(DataErrc::invalid_argument, "aggregate_velocity: no observed rows");
  if (query.size() != ensemble.d())
    throw DataError(DataErrc::dimension_mismatch, "aggregate_velocity: query dimension mismatch");

  VelocityResult res;
  res.v.assign(query.size(), 0.0);
  if (diagnostics) res.per_pattern.emplace();
  std::vector<double> scratch;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    PatternVelocity pv = detail::solve_pattern(groups[g].pattern, targets[g], ensemble[g], query,
                                               sigma, epsilon, scratch);
    const double weight = static_cast<double>(groups[g].n_m()) / static_cast<double>(n);
    for (std::size_t j : groups[g].pattern.observed_idx) res.v[j] += weight * pv.w_padded[j];
    res.underflow_patterns += pv.ensemble_underflow;
    if (diagnostics) res.per_pattern->push_back(std::move(pv));
  }
  return res;
}

inline VelocityResult aggregate_velocity(const std::vector<PatternGroup>& groups, const Matrix& ensemble,
                                         std::span<const double> query, Bandwidth sigma,
                                         double epsilon, bool diagnostics = false) {
  return aggregate_velocity(groups, PreparedTargets(groups), PreparedEnsemble(groups, ensemble), query,
                            sigma, epsilon, diagnostics);
}

}  // namespace flowgem
