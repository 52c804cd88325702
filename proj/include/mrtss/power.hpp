#pragma once

// Power and minimum sample size for the least-squares F test of H0: beta = 0.
//
// With c_N = N d^T M d, the test rejects when the statistic exceeds
// p(N-q-1)/(N-q-p) * F^{-1}_{p,N-q-p}(1 - alpha0). Dividing the statistic by
// that multiplier gives an (approximately) noncentral F(p, N-q-p; c_N)
// variable, so
//   power(N) = 1 - F_{p,N-q-p;c_N}( F^{-1}_{p,N-q-p}(1 - alpha0) ).

#include <Eigen/Dense>

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "mrtss/design.hpp"
#include "mrtss/error.hpp"
#include "mrtss/numerics.hpp"

namespace mrtss {

inline constexpr int kSampleSizeFloor = 10;
inline constexpr int kSampleSizeCap = 10000;
inline constexpr int kLinearScanSpan = 200;

struct Warning {
  std::string code;
  std::string message;
};

struct SampleSizeResult {
  int n = 0;
  double power_at_n = 0.0;
  int unfloored_n = 0;  // smallest N reaching the target before the floor
  std::vector<Warning> warnings;
};

struct PowerCalcResult {
  double power = 0.0;
  int n = 0;
  double noncentrality = 0.0;
};

inline void validate_alpha(double alpha0) {
  if (!(alpha0 > 0.0 && alpha0 < 1.0))
    throw ValidationError("invalid_alpha", "significance level must lie in (0, 1)",
                          {{"alpha", "must lie in (0, 1)", {}}});
}

inline int minimum_sample_size(const StudyDesign& d) { return d.p + d.q + 1; }

/// d^T M d, the per-participant non-centrality.
inline double unit_noncentrality(const StudyDesign& d) {
  const Eigen::MatrixXd m = information_matrix(d);
  return d.effect.dot(m * d.effect);
}

/// c_N = N d^T M d.
inline double noncentrality(const StudyDesign& d, int n) {
  return n * unit_noncentrality(d);
}

namespace detail {

inline double power_from_noncentrality(double ncp, int p, int q, double alpha0, int n,
                                       const Tolerance& tol) {
  if (ncp <= 0.0) return alpha0;
  const double df1 = p;
  const double df2 = n - q - p;
  const double crit = f_quantile(1.0 - alpha0, df1, df2, tol);
  return 1.0 - noncentral_f_cdf(crit, df1, df2, ncp, tol);
}

inline void require_df(const StudyDesign& d, int n) {
  if (n < minimum_sample_size(d)) {
    std::ostringstream os;
    os << "sample size " << n << " leaves no denominator degrees of freedom; need N >= "
       << minimum_sample_size(d) << " (p + q + 1)";
    throw ValidationError("n_too_small", os.str(), {{"n", os.str(), {}}});
  }
}

}  // namespace detail

/// Power of the level-alpha0 test with N participants.
inline double power_at(const StudyDesign& d, double alpha0, int n,
                       const Tolerance& tol = kDefaultTolerance) {
  validate_alpha(alpha0);
  detail::require_df(d, n);
  return detail::power_from_noncentrality(noncentrality(d, n), d.p, d.q, alpha0, n, tol);
}

inline PowerCalcResult compute_power(const StudyDesign& d, double alpha0, int n,
                                     const Tolerance& tol = kDefaultTolerance) {
  validate_alpha(alpha0);
  detail::require_df(d, n);
  const double ncp = noncentrality(d, n);
  return {detail::power_from_noncentrality(ncp, d.p, d.q, alpha0, n, tol), n, ncp};
}

/// Smallest N >= p+q+1 whose power reaches `target_power`, up to
/// kSampleSizeCap. The first kLinearScanSpan values are scanned one by one,
/// since the degrees of freedom move with N and small-N monotonicity is not
/// guaranteed. Past that, power is increasing in N and the remainder is
/// bisected, which keeps a search out to the cap to a few dozen evaluations.
/// Answers below kSampleSizeFloor are raised to the floor with a warning.
inline SampleSizeResult solve_sample_size(const StudyDesign& d, double alpha0,
                                          double target_power,
                                          const Tolerance& tol = kDefaultTolerance) {
  validate_alpha(alpha0);
  if (!(target_power > alpha0 && target_power < 1.0))
    throw ValidationError("invalid_target", "target power must lie in (alpha, 1)",
                          {{"target_power", "must lie in (alpha, 1)", {}}});
  const double unit = unit_noncentrality(d);
  auto power = [&](int n) {
    return detail::power_from_noncentrality(n * unit, d.p, d.q, alpha0, n, tol);
  };

  const int n_min = minimum_sample_size(d);
  int found = 0;
  if (unit > 0.0) {
    const int scan_end = std::min(kSampleSizeCap, n_min + kLinearScanSpan - 1);
    for (int n = n_min; n <= scan_end; ++n) {
      if (power(n) >= target_power) {
        found = n;
        break;
      }
    }
    if (found == 0 && scan_end < kSampleSizeCap && power(kSampleSizeCap) >= target_power) {
      int lo = scan_end, hi = kSampleSizeCap;  // power(lo) < target <= power(hi)
      while (hi - lo > 1) {
        const int mid = lo + (hi - lo) / 2;
        (power(mid) >= target_power ? hi : lo) = mid;
      }
      found = hi;
    }
  }
  if (found == 0) {
    const int cap = std::max(kSampleSizeCap, n_min);
    std::ostringstream os;
    os << "effect too small to power at feasible N: power at N = " << cap << " is "
       << power(cap);
    throw InfeasibleError(os.str(), cap, power(cap));
  }

  SampleSizeResult r;
  r.unfloored_n = found;
  r.n = found;
  if (found < kSampleSizeFloor) {
    r.n = kSampleSizeFloor;
    std::ostringstream os;
    os << "calculated sample size " << found << " is below " << kSampleSizeFloor
       << "; returning " << kSampleSizeFloor;
    r.warnings.push_back({"sample_size_floor", os.str()});
  }
  r.power_at_n = power(r.n);
  return r;
}

}  // namespace mrtss
