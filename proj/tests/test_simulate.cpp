#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "mrtss/power.hpp"
#include "mrtss/simulate.hpp"

using namespace mrtss;
using fixtures::constant_trend;
using fixtures::linear_trend;
using fixtures::quadratic_trend;

namespace {

GenerativeModel model_with(ErrorLaw law, double rho_corr = 0.0) {
  GenerativeModel m;
  m.error_law = law;
  m.rho_corr = rho_corr;
  return m;
}

// Raw errors for one participant: tau = 1, rho irrelevant, d = 0, ratio 1,
// so Y_t = eps_t exactly.
std::vector<double> error_draws(ErrorLaw law, double rho_corr, int days, int per_day, std::uint64_t seed) {
  const auto d = build_design(fixtures::inputs(days, per_day, 0.5, 1.0, constant_trend(0.0, TrendRole::effect)));
  const auto plan = make_plan(d, model_with(law, rho_corr));
  auto rng = replication_rng(seed, 0);
  return generate_trajectory(plan, rng).outcome;
}

double corr(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = a.size();
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Generate, NoiselessOutcomesAreExact) {
  const auto d = build_design(fixtures::inputs(6, 4, 0.5, 1.0, constant_trend(0.5, TrendRole::effect)));
  GenerativeModel m;
  m.noise_scale = 0.0;
  const auto plan = make_plan(d, m);
  auto rng = replication_rng(1, 0);
  const auto tr = generate_trajectory(plan, rng);
  for (std::size_t i = 0; i < tr.outcome.size(); ++i) {
    ASSERT_EQ(tr.available[i], 1);
    EXPECT_EQ(tr.outcome[i], tr.treatment[i] == Treatment::treated ? 0.25 : -0.25);
  }
}

TEST(Generate, AvailabilityAndTreatmentRates) {
  const auto d = build_design(fixtures::inputs(100, 5, 0.4, 0.7, constant_trend(0.1, TrendRole::effect)));
  const auto plan = make_plan(d, GenerativeModel{});
  auto rng = replication_rng(5, 0);
  long avail = 0, treated = 0, total = 0;
  for (int i = 0; i < 200; ++i) {
    const auto tr = generate_trajectory(plan, rng);
    for (std::size_t t = 0; t < tr.available.size(); ++t) {
      ++total;
      if (tr.available[t]) {
        ++avail;
        treated += tr.treatment[t] == Treatment::treated;
        EXPECT_NE(tr.treatment[t], Treatment::undefined);
      } else {
        EXPECT_EQ(tr.treatment[t], Treatment::undefined);
      }
    }
  }
  const double ra = double(avail) / total, rt = double(treated) / avail;
  EXPECT_NEAR(ra, 0.7, 4 * std::sqrt(0.21 / total));
  EXPECT_NEAR(rt, 0.4, 4 * std::sqrt(0.24 / avail));
}

TEST(Generate, ArLagOneCorrelation) {
  for (double rho : {-0.8, 0.5}) {
    const auto e = error_draws(ErrorLaw::ar, rho, 20000, 5, 9);
    std::vector<double> a(e.begin(), e.end() - 1), b(e.begin() + 1, e.end());
    EXPECT_NEAR(corr(a, b), rho, 0.02);
    std::vector<double> c(e.begin(), e.end() - 2), d(e.begin() + 2, e.end());
    EXPECT_NEAR(corr(c, d), rho * rho, 0.02);
    double ss = 0;
    for (double x : e) ss += x * x;
    EXPECT_NEAR(ss / e.size(), 1.0, 0.03);
  }
}

TEST(Generate, CsBlockCorrelation) {
  const int k = 4;
  const auto e = error_draws(ErrorLaw::cs_block, 0.5, 20000, k, 21);
  std::vector<double> w0, w1, x0, x1;
  for (int day = 0; day + 1 < 20000; ++day) {
    w0.push_back(e[day * k]);
    w1.push_back(e[day * k + 2]);
    x0.push_back(e[day * k + k - 1]);
    x1.push_back(e[(day + 1) * k]);
  }
  EXPECT_NEAR(corr(w0, w1), 0.5, 0.02);
  EXPECT_NEAR(corr(x0, x1), 0.0, 0.02);
}

TEST(Generate, CsBlockRejectsIndefiniteCorrelation) {
  const auto d = build_design(fixtures::inputs(5, 5, 0.5, 1.0, constant_trend(0.1, TrendRole::effect)));
  EXPECT_THROW(make_plan(d, model_with(ErrorLaw::cs_block, -0.5)), ValidationError);
}

TEST(Generate, HeavyTailAndSkewedLawsStandardized) {
  auto t3 = error_draws(ErrorLaw::iid_t3, 0, 40000, 25, 4);
  std::sort(t3.begin(), t3.end());
  const double q3 = t3[t3.size() * 3 / 4], q1 = t3[t3.size() / 4];
  EXPECT_NEAR((q3 - q1) / 2, 0.764892 / std::sqrt(3.0), 0.01);

  const auto ex = error_draws(ErrorLaw::iid_centered_exp, 0, 40000, 25, 5);
  double m = 0, v = 0;
  for (double x : ex) m += x;
  m /= ex.size();
  for (double x : ex) v += (x - m) * (x - m);
  EXPECT_NEAR(m, 0.0, 0.01);
  EXPECT_NEAR(v / ex.size(), 1.0, 0.02);
  EXPECT_GE(*std::min_element(ex.begin(), ex.end()), -1.0);
}

TEST(Generate, HeteroscedasticArms) {
  const auto d = build_design(fixtures::inputs(2000, 5, 0.4, 1.0, constant_trend(0.0, TrendRole::effect)));
  GenerativeModel m;
  m.ratio = 1.2;
  const auto plan = make_plan(d, m);
  // sigma-bar^2 = rho s1^2 + (1 - rho) s0^2 = 1 with s1 = 1.2 s0.
  EXPECT_NEAR(0.4 * plan.sigma1[0] * plan.sigma1[0] + 0.6 * plan.sigma0[0] * plan.sigma0[0], 1.0, 1e-14);
  EXPECT_NEAR(plan.sigma1[0] / plan.sigma0[0], 1.2, 1e-14);
  auto rng = replication_rng(3, 0);
  const auto tr = generate_trajectory(plan, rng);
  double s0 = 0, s1 = 0;
  int n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < tr.outcome.size(); ++i) {
    const double y = tr.outcome[i];
    if (tr.treatment[i] == Treatment::treated) s1 += y * y, ++n1;
    else s0 += y * y, ++n0;
  }
  EXPECT_NEAR(std::sqrt(s1 / n1) / std::sqrt(s0 / n0), 1.2, 0.03);
}

TEST(Curves, VarianceTrends) {
  for (auto tr : {VarianceTrend::flat, VarianceTrend::incr, VarianceTrend::decr, VarianceTrend::jump}) {
    const auto v = variance_trend_curve(tr, 500);
    EXPECT_NEAR(std::accumulate(v.begin(), v.end(), 0.0) / 500, 1.0, 1e-12);
  }
  const auto inc = variance_trend_curve(VarianceTrend::incr, 500);
  EXPECT_NEAR(inc.back() / inc.front(), 3.0, 1e-12);
  const auto jump = variance_trend_curve(VarianceTrend::jump, 500);
  EXPECT_EQ(jump[249], jump[0]);
  EXPECT_NEAR(jump[250] / jump[249], 3.0, 1e-12);
  const auto dec = variance_trend_curve(VarianceTrend::decr, 500);
  for (int i = 0; i < 500; ++i) EXPECT_NEAR(dec[i], inc[499 - i], 1e-12);
}

TEST(Curves, EffectShapes) {
  for (auto s : {EffectShape::fig_a1_a, EffectShape::fig_a1_b, EffectShape::fig_a1_c}) {
    const auto v = effect_shape_curve(s, 100, 5, 0.15);
    ASSERT_EQ(v.size(), 500u);
    EXPECT_NEAR(std::accumulate(v.begin(), v.end(), 0.0) / 500, 0.15, 1e-12);
    EXPECT_EQ(v[0], 0.0);
    for (int k = 0; k < 5; ++k) EXPECT_EQ(v[5 * 37 + k], v[5 * 37]);
  }
  const auto a = effect_shape_curve(EffectShape::fig_a1_a, 100, 1, 0.1);
  const double peak = a[49];
  for (int day = 50; day <= 100; ++day) EXPECT_NEAR(a[day - 1], peak, 1e-15);
  const auto b = effect_shape_curve(EffectShape::fig_a1_b, 100, 1, 0.1);
  EXPECT_NEAR(b[99] / b[49], 0.6, 1e-12);
  const auto c = effect_shape_curve(EffectShape::fig_a1_c, 100, 1, 0.1);
  EXPECT_EQ(c[99], 0.0);
  EXPECT_EQ(c[79], 0.0);
  EXPECT_GT(c[78], 0.0);
  EXPECT_THROW(effect_shape_curve(EffectShape::in_class, 10, 1, 0.1), std::invalid_argument);
}

TEST(Plan, MisspecifiedEffectUsesProjection) {
  const auto d = build_design(fixtures::reference_design(100, 5, 2));
  GenerativeModel m;
  m.effect_shape = EffectShape::fig_a1_c;
  const auto plan = make_plan(d, m);
  const auto proj = project_effect(plan.effect, d);
  EXPECT_TRUE(plan.design.effect.isApprox(proj, 1e-14));
  EXPECT_EQ(plan.design.p, 3);
}

TEST(Fit, NearNoiselessRecoversCoefficients) {
  const auto d = build_design(fixtures::inputs(20, 3, 0.4, 0.8, quadratic_trend(0.2, 0.05, 12, TrendRole::effect)));
  GenerativeModel m;
  m.noise_scale = 1e-12;  // exact zero leaves the sandwich singular
  const auto plan = make_plan(d, m);
  auto rng = replication_rng(17, 0);
  std::vector<Trajectory> data(12);
  for (auto& tr : data) tr = generate_trajectory(plan, rng);
  const auto fit = wls_fit(data, d, 0.05);
  EXPECT_LE((fit.beta_hat - d.effect).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(fit.alpha_hat.cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_TRUE(fit.reject);
}

TEST(Fit, TooFewParticipants) {
  const auto d = build_design(fixtures::reference_design(10, 5, 1));
  auto rng = replication_rng(2, 0);
  const auto plan = make_plan(d, GenerativeModel{});
  std::vector<Trajectory> data(4);
  for (auto& tr : data) tr = generate_trajectory(plan, rng);
  EXPECT_THROW(wls_fit(data, d, 0.05), FitError);
}

TEST(Fit, ManclDerouenInflatesVariance) {
  const auto d = build_design(fixtures::reference_design(50, 10, 1));
  const auto plan = make_plan(d, GenerativeModel{});
  auto rng = replication_rng(8, 0);
  std::vector<Trajectory> data(10);
  for (auto& tr : data) tr = generate_trajectory(plan, rng);
  const auto plain = wls_fit(data, d, 0.05);
  const auto md = wls_fit(data, d, 0.05, SandwichCorrection::mancl_derouen);
  EXPECT_TRUE(plain.beta_hat.isApprox(md.beta_hat, 1e-14));
  EXPECT_GT(md.sigma_beta_hat.trace(), plain.sigma_beta_hat.trace());
  EXPECT_LT(md.test_statistic, plain.test_statistic);
}

TEST(Fit, CriticalValue) {
  // p(N-q-1)/(N-q-p) * F^{-1}_{p, N-q-p}(0.95)
  EXPECT_NEAR(test_critical_value(1, 1, 10, 0.05), 8.0 / 8.0 * f_quantile(0.95, 1, 8), 1e-12);
  EXPECT_NEAR(test_critical_value(3, 3, 20, 0.05), 3.0 * 16 / 14 * f_quantile(0.95, 3, 14), 1e-12);
}

TEST(Scenario, EstimatorConsistency) {
  const auto d = build_design(fixtures::reference_design(20, 5, 1));
  const auto plan = make_plan(d, GenerativeModel{});
  const int reps = 300, n = 100;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d.p), sumsq = Eigen::VectorXd::Zero(d.p);
  for (int r = 0; r < reps; ++r) {
    auto rng = replication_rng(99, r);
    std::vector<Trajectory> data(n);
    for (auto& tr : data) tr = generate_trajectory(plan, rng);
    const auto b = wls_fit(data, d, 0.05).beta_hat;
    sum += b;
    sumsq += b.cwiseProduct(b);
  }
  const Eigen::VectorXd mean = sum / reps;
  const Eigen::VectorXd sd = (sumsq / reps - mean.cwiseProduct(mean)).cwiseSqrt();
  for (int k = 0; k < d.p; ++k) EXPECT_NEAR(mean[k], d.effect[k], 3 * sd[k] / std::sqrt(reps)) << k;
}

TEST(Scenario, SingleReplication) {
  const auto d = build_design(fixtures::reference_design(10, 5, 0));
  const auto r = run_scenario(d, GenerativeModel{}, 10, 0.05, 1, 3);
  EXPECT_TRUE(r.empirical_power == 0.0 || r.empirical_power == 1.0);
  EXPECT_EQ(r.replications, 1);
}

TEST(Scenario, DeterministicAcrossWorkers) {
  const auto d = build_design(fixtures::reference_design(25, 5, 2));
  GenerativeModel m;
  m.error_law = ErrorLaw::ar;
  m.rho_corr = 0.5;
  ScenarioOptions one{1, SandwichCorrection::none}, four{4, SandwichCorrection::none};
  const auto a = run_scenario(d, m, 10, 0.05, 120, 42, one);
  const auto b = run_scenario(d, m, 10, 0.05, 120, 42, four);
  const auto c = run_scenario(d, m, 10, 0.05, 120, 42, four);
  EXPECT_EQ(a.rejections, b.rejections);
  EXPECT_EQ(a.failed_fits, b.failed_fits);
  EXPECT_EQ(a.empirical_power, b.empirical_power);
  EXPECT_EQ(b.empirical_power, c.empirical_power);
  const auto other = run_scenario(d, m, 10, 0.05, 120, 43, four);
  EXPECT_EQ(other.replications, 120);
}

TEST(Scenario, TypeOneErrorSmoke) {
  const auto d = build_design(fixtures::inputs(20, 5, 0.4, 0.7, constant_trend(0.0, TrendRole::effect)));
  const auto r = run_scenario(d, GenerativeModel{}, 50, 0.05, 300, 11);
  EXPECT_GE(r.empirical_power, 0.01);
  EXPECT_LE(r.empirical_power, 0.10);
}

TEST(Scenario, Contracts) {
  const auto d = build_design(fixtures::reference_design(10, 5, 0));
  EXPECT_THROW(run_scenario(d, GenerativeModel{}, 10, 0.05, 0, 1), ValidationError);
  EXPECT_THROW(run_scenario(d, GenerativeModel{}, 2, 0.05, 10, 1), ValidationError);
  GenerativeModel bad;
  bad.rho_corr = 1.0;
  EXPECT_THROW(run_scenario(d, bad, 10, 0.05, 10, 1), ValidationError);
}
