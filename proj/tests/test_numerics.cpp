#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "mrtss/numerics.hpp"

using namespace mrtss;

namespace {

// Student t density, integrated by composite Simpson. P(F(1, v) <= x) =
// P(|T_v| <= sqrt(x)), which gives an F(1, v) oracle independent of the
// incomplete beta code.
double t_density(double t, double v) {
  const double c = std::exp(std::lgamma((v + 1) / 2) - std::lgamma(v / 2)) / std::sqrt(v * M_PI);
  return c * std::pow(1.0 + t * t / v, -(v + 1) / 2);
}

double f1_cdf_by_quadrature(double x, double v) {
  const double hi = std::sqrt(x);
  const int n = 20000;
  const double h = hi / n;
  double s = t_density(0, v) + t_density(hi, v);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * t_density(i * h, v);
  return 2.0 * s * h / 3.0;
}

// Plain bisection on f_cdf, no secant steps.
double bisect_quantile(double u, double d1, double d2) {
  double lo = 0, hi = 1;
  while (f_cdf(hi, d1, d2) < u) hi *= 2;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f_cdf(mid, d1, d2) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Poisson mixture summed forward from k = 0, weights in log space.
double ncf_forward_sum(double x, double d1, double d2, double ncp) {
  const double y = d1 * x / (d1 * x + d2);
  const double lam = ncp / 2;
  double total = 0;
  const int last = static_cast<int>(lam + 40 * std::sqrt(lam) + 200);
  for (int k = 0; k < last; ++k) {
    const double w = std::exp(-lam + k * std::log(lam) - std::lgamma(k + 1.0));
    total += w * reg_inc_beta(y, d1 / 2 + k, d2 / 2);
  }
  return total;
}

}  // namespace

TEST(RegIncBeta, ClosedForms) {
  EXPECT_NEAR(reg_inc_beta(0.3, 1, 1), 0.3, 1e-14);
  EXPECT_NEAR(reg_inc_beta(0.5, 3.7, 3.7), 0.5, 1e-13);
  EXPECT_NEAR(reg_inc_beta(0.2, 1, 4), 1 - std::pow(0.8, 4), 1e-13);
  EXPECT_NEAR(reg_inc_beta(0.2, 1, 4), 0.5904, 1e-12);
  EXPECT_NEAR(reg_inc_beta(0.35, 2.5, 1), std::pow(0.35, 2.5), 1e-13);
  EXPECT_EQ(reg_inc_beta(0.0, 2, 3), 0.0);
  EXPECT_EQ(reg_inc_beta(1.0, 2, 3), 1.0);
}

TEST(RegIncBeta, ComplementIdentity) {
  for (double x : {0.001, 0.05, 0.2, 0.5, 0.77, 0.95, 0.999})
    for (double a : {0.5, 1.0, 2.5, 10.0, 60.0})
      for (double b : {0.5, 1.0, 3.0, 25.0, 200.0})
        EXPECT_NEAR(reg_inc_beta(x, a, b) + reg_inc_beta(1 - x, b, a), 1.0, 1e-12)
            << x << " " << a << " " << b;
}

TEST(RegIncBeta, MonotoneInX) {
  for (double a : {0.5, 4.0, 40.0}) {
    double prev = 0;
    for (int i = 0; i <= 200; ++i) {
      const double v = reg_inc_beta(i / 200.0, a, 3.0);
      EXPECT_GE(v, prev - 1e-15);
      prev = v;
    }
  }
}

TEST(RegIncBeta, DomainErrors) {
  EXPECT_THROW(reg_inc_beta(-0.1, 1, 1), std::domain_error);
  EXPECT_THROW(reg_inc_beta(1.1, 1, 1), std::domain_error);
  EXPECT_THROW(reg_inc_beta(0.5, 0, 1), std::domain_error);
  EXPECT_THROW(reg_inc_beta(0.5, 1, -2), std::domain_error);
  EXPECT_THROW(reg_inc_beta(NAN, 1, 1), std::domain_error);
}

TEST(FCdf, ClosedFormF22) {
  for (double x : {0.1, 0.5, 1.0, 3.0, 40.0}) EXPECT_NEAR(f_cdf(x, 2, 2), x / (1 + x), 1e-13);
  EXPECT_NEAR(f_cdf(1, 2, 2), 0.5, 1e-14);
  EXPECT_EQ(f_cdf(0, 1, 8), 0.0);
}

TEST(FCdf, TableValueAgainstQuadrature) {
  const double oracle = f1_cdf_by_quadrature(5.3177, 8);
  EXPECT_NEAR(oracle, 0.95, 1e-4);
  EXPECT_NEAR(f_cdf(5.3177, 1, 8), oracle, 1e-9);
  for (double x : {0.3, 2.0, 9.0})
    for (double v : {3.0, 8.0, 30.0}) EXPECT_NEAR(f_cdf(x, 1, v), f1_cdf_by_quadrature(x, v), 1e-9);
}

TEST(FCdf, DomainErrors) {
  EXPECT_THROW(f_cdf(-1, 1, 1), std::domain_error);
  EXPECT_THROW(f_cdf(1, 0, 1), std::domain_error);
  EXPECT_THROW(f_cdf(1, 1, -1), std::domain_error);
}

TEST(FQuantile, MatchesBisectionOracle) {
  EXPECT_NEAR(f_quantile(0.95, 1, 8), 5.3177, 1e-3);
  EXPECT_NEAR(f_quantile(0.95, 1, 8), bisect_quantile(0.95, 1, 8), 1e-9);
  EXPECT_NEAR(f_quantile(0.5, 3, 3), 1.0, 1e-10);
  for (double u : {0.01, 0.3, 0.9, 0.999})
    EXPECT_NEAR(f_quantile(u, 4, 17), bisect_quantile(u, 4, 17), 1e-8);
}

TEST(FQuantile, RoundTripGrid) {
  for (int d1 = 1; d1 <= 50; d1 += 7)
    for (int d2 = 1; d2 <= 50; d2 += 7)
      for (int k = 1; k <= 99; k += 7) {
        const double u = k / 100.0;
        EXPECT_NEAR(f_cdf(f_quantile(u, d1, d2), d1, d2), u, 1e-10) << d1 << " " << d2 << " " << u;
      }
}

TEST(FQuantile, RejectsBoundaryProbabilities) {
  EXPECT_THROW(f_quantile(0.0, 1, 8), std::domain_error);
  EXPECT_THROW(f_quantile(1.0, 1, 8), std::domain_error);
}

TEST(NoncentralF, CentralSpecialCase) {
  for (double x : {0.2, 1.0, 5.3177, 30.0})
    for (double d2 : {2.0, 8.0, 40.0}) EXPECT_NEAR(noncentral_f_cdf(x, 3, d2, 0.0), f_cdf(x, 3, d2), 1e-12);
  EXPECT_EQ(noncentral_f_cdf(0.0, 2, 5, 7.0), 0.0);
}

TEST(NoncentralF, AgreesWithForwardSum) {
  for (double ncp : {0.5, 4.0, 12.096, 40.0, 150.0})
    for (double x : {0.5, 2.0, 5.3177})
      EXPECT_NEAR(noncentral_f_cdf(x, 1, 8, ncp), ncf_forward_sum(x, 1, 8, ncp), 1e-11);
  EXPECT_NEAR(noncentral_f_cdf(2.7, 3, 14, 9.0), ncf_forward_sum(2.7, 3, 14, 9.0), 1e-11);
}

TEST(NoncentralF, LargeNoncentralityStaysFinite) {
  const double v = noncentral_f_cdf(3.0, 2, 50, 5000.0);
  EXPECT_GE(v, 0.0);
  EXPECT_LT(v, 1e-100 + 1e-12);
  EXPECT_NEAR(noncentral_f_cdf(3000.0, 2, 50, 5000.0), ncf_forward_sum(3000.0, 2, 50, 5000.0), 1e-10);
  EXPECT_NEAR(noncentral_f_cdf(30000.0, 2, 50, 5000.0), 1.0, 1e-12);
}

TEST(NoncentralF, MonotoneGrid) {
  for (double x : {0.5, 2.0, 5.0}) {
    double prev = 1.0;
    for (double ncp = 0; ncp <= 60; ncp += 2.5) {
      const double v = noncentral_f_cdf(x, 2, 10, ncp);
      EXPECT_LE(v, prev + 1e-14);
      prev = v;
    }
  }
  for (double ncp : {0.0, 3.0, 30.0}) {
    double prev = 0.0;
    for (double x = 0; x <= 20; x += 0.25) {
      const double v = noncentral_f_cdf(x, 2, 10, ncp);
      EXPECT_GE(v, prev - 1e-14);
      prev = v;
    }
  }
}

TEST(NoncentralF, SamplingOracle) {
  // (chi'^2_1(ncp) / 1) / (chi^2_8 / 8), 10^6 draws.
  std::mt19937_64 rng(20240601);
  std::normal_distribution<double> z;
  std::chi_squared_distribution<double> chi8(8.0);
  const double ncp = 12.096, x = 5.3177;
  const int draws = 1000000;
  int below = 0;
  for (int i = 0; i < draws; ++i) {
    const double num = std::pow(z(rng) + std::sqrt(ncp), 2);
    if (num / (chi8(rng) / 8.0) <= x) ++below;
  }
  const double p = static_cast<double>(below) / draws;
  const double se = std::sqrt(p * (1 - p) / draws);
  EXPECT_NEAR(noncentral_f_cdf(x, 1, 8, ncp), p, 3 * se);
}

TEST(NoncentralF, TermCapReported) {
  Tolerance tight;
  tight.series_terms_cap = 3;
  EXPECT_THROW(noncentral_f_cdf(2.0, 2, 10, 400.0, tight), NumericError);
}

TEST(BracketedRoot, LinearAndQuantile) {
  EXPECT_NEAR(solve_bracketed_root([](double x) { return x - 2; }, 0.0, 5.0), 2.0, 1e-12);
  const double r = solve_bracketed_root([](double x) { return f_cdf(x, 1, 8) - 0.95; }, 0.0, 100.0);
  EXPECT_NEAR(r, 5.3177, 1e-3);
  EXPECT_NEAR(f_cdf(r, 1, 8), 0.95, 1e-12);
}

TEST(BracketedRoot, SameSignBracketRejected) {
  EXPECT_THROW(solve_bracketed_root([](double x) { return x + 1; }, 0.0, 5.0), std::invalid_argument);
}

TEST(BracketedRoot, NonConvergenceCarriesResidual) {
  Tolerance t;
  t.max_iter = 2;
  t.abs_tol = 1e-15;
  try {
    solve_bracketed_root([](double x) { return std::atan(x - 1.234567); }, -100.0, 1000.0, t);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_GT(std::fabs(e.residual()), 0.0);
  }
}

TEST(Tolerance, Validation) {
  EXPECT_NO_THROW(kDefaultTolerance.validate());
  Tolerance bad;
  bad.abs_tol = 0;
  EXPECT_THROW(bad.validate(), std::domain_error);
  bad = {};
  bad.max_iter = 0;
  EXPECT_THROW(bad.validate(), std::domain_error);
}
