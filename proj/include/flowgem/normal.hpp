#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include "flowgem/rng.hpp"

namespace flowgem {

/// Standard normal CDF.
inline double normal_cdf(double x) noexcept {
  // t = -x/sqrt(2) is rounded; the rounding error is amplified by x^2 in the
  // tails, so it is corrected to first order with the erfc derivative.
  constexpr double c_hi = 0.70710678118654757, c_lo = -4.833646656726457e-17;
  const double t = -x * c_hi;
  const double dt = std::fma(-x, c_hi, -t) - x * c_lo;
  const double e = std::erfc(t);
  if (!std::isfinite(t)) return e * 0.5;
  return 0.5 * (e - dt * (2.0 / std::sqrt(std::numbers::pi)) * std::exp(-t * t));
}

/// Standard normal quantile. Rational approximation (Acklam) refined by one
/// Halley step against the erfc-based CDF; relative error is near 1e-15.
inline double normal_quantile(double p) noexcept {
  if (!(p > 0.0)) return p == 0.0 ? -std::numeric_limits<double>::infinity()
                                   : std::numeric_limits<double>::quiet_NaN();
  if (!(p < 1.0)) return p == 1.0 ? std::numeric_limits<double>::infinity()
                                  : std::numeric_limits<double>::quiet_NaN();

  constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                          -2.759285104469687e+02, 1.383577518672690e+02,
                          -3.066479806614716e+01, 2.506628277459239e+00};
  constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                          -1.556989798598866e+02, 6.680131188771972e+01,
                          -1.328068155288572e+01};
  constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                          -2.400758277161838e+00, -2.549732539343734e+00,
                          4.374664141464968e+00, 2.938163982698783e+00};
  constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                          2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement. In the upper tail work with the survival function so
  // the residual is not swamped by cancellation against 1.
  constexpr double sqrt_2pi = 2.5066282746310002;
  double e;
  if (p > 0.5) {
    e = -(0.5 * std::erfc(x / std::numbers::sqrt2) - (1.0 - p));
  } else {
    e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  }
  const double u = e * sqrt_2pi * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

/// Standard normal draw by inversion; consumes exactly one rng output.
inline double standard_normal(CounterRng& rng) noexcept {
  return normal_quantile(rng.uniform_open());
}

}  // namespace flowgem
