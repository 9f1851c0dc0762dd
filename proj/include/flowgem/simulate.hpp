#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "flowgem/dataset.hpp"
#include "flowgem/error.hpp"
#include "flowgem/matrix.hpp"
#include "flowgem/normal.hpp"
#include "flowgem/rng.hpp"

namespace flowgem {

enum class Family { uniform_copula, gaussian };

inline std::string to_string(Family f) { return f == Family::uniform_copula ? "uniform" : "gaussian"; }

inline Family parse_family(const std::string& s) {
  if (s == "uniform" || s == "uniform_copula") return Family::uniform_copula;
  if (s == "gaussian") return Family::gaussian;
  throw DataError(DataErrc::invalid_argument, "unknown family '" + s + "' (uniform|gaussian)");
}

/// Three-variable design: X1, X2 correlated through `dependence`, X3
/// independent of both.
struct SyntheticSpec {
  Family family = Family::uniform_copula;
  std::size_t n = 2000;
  double dependence = 0.7;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1) throw DataError(DataErrc::invalid_argument, "n must be >= 1");
    if (!(dependence > -1.0 && dependence < 1.0))
      throw DataError(DataErrc::invalid_argument, "dependence must lie in (-1, 1)");
  }
};

/// Lower Cholesky factor of a symmetric positive definite matrix.
inline Matrix cholesky(const Matrix& s) {
  const std::size_t d = s.rows();
  Matrix l(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    double diag = s(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) throw NumericalError("cholesky: matrix is not positive definite");
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < d; ++i) {
      double v = s(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  return l;
}

inline Matrix design_covariance(double dependence) {
  Matrix s(3, 3);
  for (std::size_t j = 0; j < 3; ++j) s(j, j) = 1.0;
  s(0, 1) = s(1, 0) = dependence;
  return s;
}

/// n draws from N(0, Sigma) via Sigma = L L' applied to iid standard normals.
inline Matrix sample_mvn(std::size_t n, const Matrix& cov, CounterRng& rng) {
  const Matrix l = cholesky(cov);
  const std::size_t d = cov.rows();
  Matrix out(n, d);
  std::vector<double> z(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : z) v = standard_normal(rng);
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k <= r; ++k) acc += l(r, k) * z[k];
      out(i, r) = acc;
    }
  }
  return out;
}

inline Matrix sample_gaussian(const SyntheticSpec& spec, CounterRng& rng) {
  spec.validate();
  return sample_mvn(spec.n, design_covariance(spec.dependence), rng);
}

/// Gaussian copula with uniform marginals: X_j = Phi(Z_j), Z ~ N(0, Sigma).
inline Matrix sample_uniform_copula(const SyntheticSpec& spec, CounterRng& rng) {
  Matrix z = sample_gaussian(spec, rng);
  for (double& v : z.data()) v = normal_cdf(v);
  return z;
}

inline Matrix sample(const SyntheticSpec& spec, CounterRng& rng) {
  return spec.family == Family::gaussian ? sample_gaussian(spec, rng) : sample_uniform_copula(spec, rng);
}

// ---------------------------------------------------------------------------
// Missingness mechanisms

enum class MechanismKind { uniform_three_pattern, gaussian_three_pattern, logistic_generic };

/// P(M = patterns[k] | X = x) for each k. Probabilities of a pattern may only
/// depend on the coordinates that pattern observes.
struct MarMechanism {
  using ProbFn = std::function<double(std::size_t, std::span<const double>)>;

  std::vector<Pattern> patterns;
  ProbFn prob_fn;
  MechanismKind kind = MechanismKind::logistic_generic;

  std::vector<double> probabilities(std::span<const double> x) const {
    std::vector<double> p(patterns.size());
    for (std::size_t k = 0; k < patterns.size(); ++k) p[k] = prob_fn(k, x);
    return p;
  }

  std::size_t all_observed_index() const {
    for (std::size_t k = 0; k < patterns.size(); ++k)
      if (patterns[k].all_observed()) return k;
    throw DataError(DataErrc::invalid_argument, "mechanism lacks the all-observed pattern");
  }
};

inline Pattern pattern_from_string(const std::string& bits) {
  std::vector<bool> b;
  for (char c : bits) b.push_back(c == '1');
  return Pattern(std::move(b));
}

/// The three-pattern design on (000), (010), (100):
///   P(000 | x) = (u1 + u2) / 3,  P(010 | x) = (2 - u1) / 3,  P(100 | x) = (1 - u2) / 3
/// with u = x for the uniform family and u = Phi(x) for the Gaussian family.
inline MarMechanism three_pattern_mechanism(Family family) {
  MarMechanism m;
  m.patterns = {pattern_from_string("000"), pattern_from_string("010"), pattern_from_string("100")};
  const bool gaussian = family == Family::gaussian;
  m.kind = gaussian ? MechanismKind::gaussian_three_pattern : MechanismKind::uniform_three_pattern;
  m.prob_fn = [gaussian](std::size_t k, std::span<const double> x) -> double {
    auto u = [&](std::size_t j) { return gaussian ? normal_cdf(x[j]) : x[j]; };
    switch (k) {
      case 0: return (u(0) + u(1)) / 3.0;
      case 1: return (2.0 - u(0)) / 3.0;
      case 2: return (1.0 - u(1)) / 3.0;
      default: throw DataError(DataErrc::invalid_argument, "pattern index out of range");
    }
  };
  return m;
}

/// Draws one pattern per row with the mechanism's probabilities and masks the
/// row accordingly. Observed cells are copied bit-exactly.
inline MaskedDataset amputate(const Matrix& complete, const MarMechanism& mech, CounterRng& rng,
                              std::vector<std::string> names = {}) {
  const std::size_t n = complete.rows(), d = complete.cols();
  for (const auto& p : mech.patterns)
    if (p.d() != d) throw DataError(DataErrc::dimension_mismatch, "pattern width does not match data");
  std::vector<bool> mask(n * d, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto probs = mech.probabilities(complete.row(i));
    double total = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0 && p <= 1.0))
        throw DataError(DataErrc::invalid_argument,
                        "mechanism probability outside [0, 1] at row " + std::to_string(i));
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw DataError(DataErrc::invalid_argument,
                      "mechanism probabilities do not sum to 1 at row " + std::to_string(i));
    const double u = rng.uniform() * total;
    std::size_t k = 0;
    double cum = probs[0];
    while (u >= cum && k + 1 < probs.size()) cum += probs[++k];
    for (std::size_t j = 0; j < d; ++j) mask[i * d + j] = mech.patterns[k].bits[j];
  }
  return MaskedDataset(complete, std::move(mask), std::move(names));
}

inline double missing_fraction(const MaskedDataset& ds) {
  return static_cast<double>(ds.missing_count()) / static_cast<double>(ds.rows() * ds.cols());
}

// Share of probability mass reserved for the all-observed pattern at minimum.
inline constexpr double logistic_min_complete_prob = 0.01;

/// Random-pattern MAR mechanism calibrated to a target missing-cell fraction.
///
/// Draws n_patterns - 1 distinct patterns that are neither all-observed nor
/// all-missing. Each such pattern k gets
///   P(k | x) = (1 - c) / (K - 1) * sigmoid(alpha + beta_k' z^(k)),
/// where z is x standardized by the pilot column statistics and z^(k) its
/// coordinates observed under k; the all-observed pattern takes the
/// remainder, which is at least c = 0.01. The intercept alpha is found by
/// bisection so that the expected masked fraction over the pilot sample hits
/// the target.
inline MarMechanism generic_logistic_mar(std::size_t n_patterns, double target_missing_frac,
                                         const Matrix& pilot, CounterRng& rng) {
  const std::size_t d = pilot.cols();
  if (d < 1 || d > 62) throw DataError(DataErrc::invalid_argument, "generic_logistic_mar: d must be in [1, 62]");
  const std::uint64_t max_nontrivial = (std::uint64_t{1} << d) - 2;
  if (n_patterns < 2 || n_patterns - 1 > max_nontrivial)
    throw DataError(DataErrc::invalid_argument,
                    "generic_logistic_mar: need 2 <= n_patterns <= 2^d - 1 (all-missing is excluded)");
  if (!(target_missing_frac > 0.0 && target_missing_frac <= 0.6))
    throw DataError(DataErrc::invalid_argument, "generic_logistic_mar: target must lie in (0, 0.6]");
  if (pilot.rows() < 2) throw DataError(DataErrc::invalid_argument, "generic_logistic_mar: pilot too small");

  const Standardizer pilot_std = fit_standardizer(pilot);
  const double cap = (1.0 - logistic_min_complete_prob) / static_cast<double>(n_patterns - 1);

  struct Params {
    std::vector<Pattern> patterns;               // index 0 is all-observed
    std::vector<std::vector<double>> beta;       // per pattern, over its observed coordinates
    std::vector<double> miss_frac;               // per pattern
    double alpha = 0.0;
  };
  auto params = std::make_shared<Params>();

  // Pattern sets whose best achievable missing fraction misses the target are
  // redrawn; each redraw consumes more of the same stream.
  for (int attempt = 0;; ++attempt) {
    if (attempt == 100)
      throw DataError(DataErrc::invalid_argument,
                      "generic_logistic_mar: cannot draw patterns able to reach the target fraction");
    std::set<std::vector<bool>> seen;
    std::vector<Pattern> pats{Pattern(std::vector<bool>(d, false))};
    while (pats.size() < n_patterns) {
      std::vector<bool> bits(d);
      std::size_t missing = 0;
      for (std::size_t j = 0; j < d; ++j) {
        bits[j] = (rng() >> 63) != 0;
        missing += bits[j];
      }
      if (missing == 0 || missing == d || !seen.insert(bits).second) continue;
      pats.emplace_back(std::move(bits));
    }
    double reachable = 0.0;
    for (std::size_t k = 1; k < pats.size(); ++k)
      reachable += cap * static_cast<double>(d - pats[k].d_m()) / static_cast<double>(d);
    if (reachable >= target_missing_frac + 0.02) {
      params->patterns = std::move(pats);
      break;
    }
  }
  for (const auto& p : params->patterns) {
    std::vector<double> b(p.d_m());
    for (auto& v : b) v = standard_normal(rng) / std::sqrt(static_cast<double>(p.d_m()));
    params->beta.push_back(std::move(b));
    params->miss_frac.push_back(static_cast<double>(d - p.d_m()) / static_cast<double>(d));
  }

  auto prob = [params, pilot_std, cap](std::size_t k, std::span<const double> x) -> double {
    auto nontrivial = [&](std::size_t kk) {
      const auto& p = params->patterns[kk];
      double s = params->alpha;
      for (std::size_t t = 0; t < p.d_m(); ++t) {
        const std::size_t j = p.observed_idx[t];
        s += params->beta[kk][t] * pilot_std.forward(j, x[j]);
      }
      return cap / (1.0 + std::exp(-s));
    };
    if (k >= params->patterns.size()) throw DataError(DataErrc::invalid_argument, "pattern index out of range");
    if (k != 0) return nontrivial(k);
    double rest = 0.0;
    for (std::size_t kk = 1; kk < params->patterns.size(); ++kk) rest += nontrivial(kk);
    return 1.0 - rest;
  };

  auto expected_missing = [&](double alpha) {
    params->alpha = alpha;
    double total = 0.0;
    for (std::size_t i = 0; i < pilot.rows(); ++i)
      for (std::size_t k = 1; k < params->patterns.size(); ++k)
        total += prob(k, pilot.row(i)) * params->miss_frac[k];
    return total / static_cast<double>(pilot.rows());
  };

  double lo = -60.0, hi = 60.0;
  if (expected_missing(lo) > target_missing_frac || expected_missing(hi) < target_missing_frac)
    throw NumericalError("generic_logistic_mar: target fraction not bracketed");
  int it = 0;
  for (; it < 100 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected_missing(mid) < target_missing_frac ? lo : hi) = mid;
  }
  params->alpha = 0.5 * (lo + hi);
  if (std::abs(expected_missing(params->alpha) - target_missing_frac) > 0.02)
    throw NumericalError("generic_logistic_mar: calibration failed");

  MarMechanism m;
  m.patterns = params->patterns;
  m.prob_fn = prob;
  m.kind = MechanismKind::logistic_generic;
  return m;
}

}  // namespace flowgem
