#pragma once

// Special functions and root finding used by the power engine: regularized
// incomplete beta, central F CDF and quantile, noncentral F CDF.
//
// Everything here is a pure function of its arguments.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "mrtss/error.hpp"

namespace mrtss {

struct Tolerance {
  double abs_tol = 1e-12;
  int max_iter = 500;
  int series_terms_cap = 10000;

  void validate() const {
    if (!(abs_tol > 0.0)) throw std::domain_error("Tolerance: abs_tol must be > 0");
    if (max_iter < 1) throw std::domain_error("Tolerance: max_iter must be >= 1");
    if (series_terms_cap < 1)
      throw std::domain_error("Tolerance: series_terms_cap must be >= 1");
  }
};

inline constexpr Tolerance kDefaultTolerance{};

namespace detail {

// lgamma without touching the global `signgam` (arguments here are positive).
inline double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

inline double log_beta(double a, double b) {
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
inline double beta_continued_fraction(double x, double a, double b, int max_iter) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 4.0 * std::numeric_limits<double>::epsilon();
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  // Large shape parameters need O(sqrt(max(a, b))) terms.
  const int limit = std::max(max_iter, static_cast<int>(20.0 * std::sqrt(std::max(a, b))) + 50);
  for (int m = 1; m <= limit; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) <= eps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge", std::fabs(h));
}

// I_x(a, b) given both x and its complement y = 1 - x, so callers that know
// the complement exactly (the F CDF does) keep full precision near x = 1.
inline double reg_inc_beta_pair(double x, double y, double a, double b, int max_iter) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log(y) - log_beta(a, b);
  if (x > (a + 1.0) / (a + b + 2.0)) {
    const double front = std::exp(log_front);
    return 1.0 - front * beta_continued_fraction(y, b, a, max_iter) / b;
  }
  const double front = std::exp(log_front);
  return front * beta_continued_fraction(x, a, b, max_iter) / a;
}

inline void require_positive(double v, const char* what) {
  if (!std::isfinite(v) || !(v > 0.0)) {
    std::ostringstream os;
    os << what << " must be finite and > 0 (got " << v << ")";
    throw std::domain_error(os.str());
  }
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b).
inline double reg_inc_beta(double x, double a, double b,
                           const Tolerance& tol = kDefaultTolerance) {
  if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
    std::ostringstream os;
    os << "reg_inc_beta: x must lie in [0, 1] (got " << x << ")";
    throw std::domain_error(os.str());
  }
  detail::require_positive(a, "reg_inc_beta: a");
  detail::require_positive(b, "reg_inc_beta: b");
  return std::clamp(detail::reg_inc_beta_pair(x, 1.0 - x, a, b, tol.max_iter), 0.0, 1.0);
}

/// CDF of the central F(d1, d2) distribution.
inline double f_cdf(double x, double d1, double d2, const Tolerance& tol = kDefaultTolerance) {
  if (std::isnan(x) || x < 0.0) {
    std::ostringstream os;
    os << "f_cdf: x must be >= 0 (got " << x << ")";
    throw std::domain_error(os.str());
  }
  detail::require_positive(d1, "f_cdf: d1");
  detail::require_positive(d2, "f_cdf: d2");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double denom = d1 * x + d2;
  return std::clamp(
      detail::reg_inc_beta_pair(d1 * x / denom, d2 / denom, 0.5 * d1, 0.5 * d2, tol.max_iter),
      0.0, 1.0);
}

/// Root of a monotone function on [lo, hi] where f(lo) and f(hi) differ in
/// sign. Illinois-modified regula falsi, falling back to bisection whenever
/// the bracket stops shrinking geometrically. Returns x with |f(x)| <= abs_tol
/// or a bracket no wider than abs_tol.
template <typename F>
double solve_bracketed_root(F&& f, double lo, double hi,
                            const Tolerance& tol = kDefaultTolerance) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw std::invalid_argument("solve_bracketed_root: invalid bracket (need finite lo < hi)");
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) {
    std::ostringstream os;
    os << "solve_bracketed_root: invalid bracket, f(" << lo << ")=" << flo << " and f(" << hi
       << ")=" << fhi << " share a sign";
    throw std::invalid_argument(os.str());
  }
  int side = 0;  // which endpoint was retained last (-1 lo, +1 hi)
  double best_x = std::fabs(flo) < std::fabs(fhi) ? lo : hi;
  double best_f = std::min(std::fabs(flo), std::fabs(fhi));
  double last_width = hi - lo;
  for (int iter = 0; iter < tol.max_iter; ++iter) {
    const double width = hi - lo;
    if (width <= tol.abs_tol) return best_x;
    double x = (lo * fhi - hi * flo) / (fhi - flo);
    // Bisect when the secant point is unusable or the bracket shrinks slowly.
    if (!(x > lo && x < hi) || (iter % 3 == 2 && width > 0.5 * last_width)) {
      x = lo + 0.5 * width;
    }
    if (iter % 3 == 2) last_width = width;
    if (!(x > lo && x < hi)) return best_x;  // no representable interior point left
    const double fx = f(x);
    if (std::fabs(fx) < best_f) {
      best_f = std::fabs(fx);
      best_x = x;
    }
    if (std::fabs(fx) <= tol.abs_tol) return x;
    if ((fx > 0.0) == (flo > 0.0)) {
      lo = x;
      flo = fx;
      if (side == -1) fhi *= 0.5;
      side = -1;
    } else {
      hi = x;
      fhi = fx;
      if (side == 1) flo *= 0.5;
      side = 1;
    }
  }
  throw NumericError("solve_bracketed_root: no convergence within max_iter", best_f);
}

/// Quantile of the central F(d1, d2) distribution, u in (0, 1).
inline double f_quantile(double u, double d1, double d2,
                         const Tolerance& tol = kDefaultTolerance) {
  if (!(u > 0.0 && u < 1.0)) {
    std::ostringstream os;
    os << "f_quantile: u must lie strictly inside (0, 1) (got " << u << ")";
    throw std::domain_error(os.str());
  }
  detail::require_positive(d1, "f_quantile: d1");
  detail::require_positive(d2, "f_quantile: d2");
  auto g = [&](double x) { return f_cdf(x, d1, d2, tol) - u; };
  double hi = 1.0;
  while (g(hi) < 0.0) {
    hi *= 2.0;
    if (!std::isfinite(hi) || hi > 1e300)
      throw NumericError("f_quantile: could not bracket the quantile", g(hi / 2.0));
  }
  return solve_bracketed_root(g, 0.0, hi, tol);
}

/// CDF of the noncentral F(d1, d2; ncp) distribution as a Poisson(ncp/2)
/// mixture of incomplete beta terms. Summation starts at the Poisson mode and
/// walks outward in both directions until the geometric bound on the
/// neglected Poisson mass in each direction drops below abs_tol / 2.
inline double noncentral_f_cdf(double x, double d1, double d2, double ncp,
                               const Tolerance& tol = kDefaultTolerance) {
  if (std::isnan(x) || x < 0.0) {
    std::ostringstream os;
    os << "noncentral_f_cdf: x must be >= 0 (got " << x << ")";
    throw std::domain_error(os.str());
  }
  detail::require_positive(d1, "noncentral_f_cdf: d1");
  detail::require_positive(d2, "noncentral_f_cdf: d2");
  if (!std::isfinite(ncp) || ncp < 0.0) {
    std::ostringstream os;
    os << "noncentral_f_cdf: ncp must be finite and >= 0 (got " << ncp << ")";
    throw std::domain_error(os.str());
  }
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (ncp == 0.0) return f_cdf(x, d1, d2, tol);

  const double denom = d1 * x + d2;
  const double y = d1 * x / denom;
  const double yc = d2 / denom;
  const double a = 0.5 * d1;
  const double b = 0.5 * d2;
  const double lambda = 0.5 * ncp;
  const double mode = std::floor(lambda);
  const double half_tol = 0.5 * tol.abs_tol;

  auto term = [&](double j) {
    return detail::reg_inc_beta_pair(y, yc, a + j, b, tol.max_iter);
  };

  const double w_mode = std::exp(-lambda + mode * std::log(lambda) - detail::log_gamma(mode + 1.0));
  double sum = w_mode * term(mode);
  int terms = 1;

  // Downward: w_{j-1} = w_j * j / lambda.
  double w = w_mode;
  for (double j = mode; j > 0.0;) {
    w *= j / lambda;
    j -= 1.0;
    sum += w * term(j);
    if (++terms > tol.series_terms_cap) {
      throw NumericError("noncentral_f_cdf: series term cap exceeded (lower tail)",
                         w * j / std::max(lambda - j, 1e-300));
    }
    if (j < lambda && w * j / (lambda - j) < half_tol) break;
  }

  // Upward: w_{j+1} = w_j * lambda / (j + 1).
  w = w_mode;
  for (double j = mode;;) {
    w *= lambda / (j + 1.0);
    j += 1.0;
    sum += w * term(j);
    const double ratio = lambda / (j + 1.0);
    const double bound = ratio < 1.0 ? w * ratio / (1.0 - ratio) : 1.0;
    if (bound < half_tol) break;
    if (++terms > tol.series_terms_cap) {
      throw NumericError("noncentral_f_cdf: series term cap exceeded (upper tail)", bound);
    }
  }
  return std::clamp(sum, 0.0, 1.0);
}

}  // namespace mrtss
