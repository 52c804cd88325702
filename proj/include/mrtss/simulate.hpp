#pragma once

// Monte Carlo check of the analytic power: simulate participant
// trajectories under a generative model, fit the working model by least
// squares with a sandwich variance, and apply the small-sample F test.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "mrtss/design.hpp"
#include "mrtss/error.hpp"
#include "mrtss/numerics.hpp"
#include "mrtss/power.hpp"

namespace mrtss {

enum class ErrorLaw { iid_normal, iid_t3, iid_centered_exp, ar, cs_block };
enum class EffectShape { in_class, fig_a1_a, fig_a1_b, fig_a1_c };
enum class VarianceTrend { flat, incr, decr, jump };
enum class SandwichCorrection { none, mancl_derouen };

inline std::string_view to_string(ErrorLaw e) {
  switch (e) {
    case ErrorLaw::iid_normal: return "iid_normal";
    case ErrorLaw::iid_t3: return "iid_t3";
    case ErrorLaw::iid_centered_exp: return "iid_centered_exp";
    case ErrorLaw::ar: return "ar";
    case ErrorLaw::cs_block: return "cs_block";
  }
  return "iid_normal";
}

inline std::string_view to_string(EffectShape s) {
  switch (s) {
    case EffectShape::in_class: return "in_class";
    case EffectShape::fig_a1_a: return "fig_a1_a";
    case EffectShape::fig_a1_b: return "fig_a1_b";
    case EffectShape::fig_a1_c: return "fig_a1_c";
  }
  return "in_class";
}

inline std::string_view to_string(VarianceTrend v) {
  switch (v) {
    case VarianceTrend::flat: return "flat";
    case VarianceTrend::incr: return "incr";
    case VarianceTrend::decr: return "decr";
    case VarianceTrend::jump: return "jump";
  }
  return "flat";
}

inline std::optional<ErrorLaw> parse_error_law(std::string_view s) {
  for (auto e : {ErrorLaw::iid_normal, ErrorLaw::iid_t3, ErrorLaw::iid_centered_exp, ErrorLaw::ar,
                 ErrorLaw::cs_block})
    if (s == to_string(e)) return e;
  return std::nullopt;
}

inline std::optional<EffectShape> parse_effect_shape(std::string_view s) {
  for (auto e : {EffectShape::in_class, EffectShape::fig_a1_a, EffectShape::fig_a1_b,
                 EffectShape::fig_a1_c})
    if (s == to_string(e)) return e;
  return std::nullopt;
}

inline std::optional<VarianceTrend> parse_variance_trend(std::string_view s) {
  for (auto e : {VarianceTrend::flat, VarianceTrend::incr, VarianceTrend::decr, VarianceTrend::jump})
    if (s == to_string(e)) return e;
  return std::nullopt;
}

inline std::optional<SandwichCorrection> parse_sandwich_correction(std::string_view s) {
  if (s == "none") return SandwichCorrection::none;
  if (s == "mancl_derouen" || s == "md") return SandwichCorrection::mancl_derouen;
  return std::nullopt;
}

struct GenerativeModel {
  ErrorLaw error_law = ErrorLaw::iid_normal;
  double rho_corr = 0.0;  // ar / cs_block only
  EffectShape effect_shape = EffectShape::in_class;
  VarianceTrend variance_trend = VarianceTrend::flat;
  double ratio = 1.0;        // sigma_1t / sigma_0t
  double noise_scale = 1.0;  // 0 gives noiseless outcomes
  std::uint64_t seed = 0;

  void validate() const {
    if (!(rho_corr > -1.0 && rho_corr < 1.0))
      throw ValidationError("invalid_model", "rho_corr must lie in (-1, 1)",
                            {{"model.rho_corr", "must lie in (-1, 1)", {}}});
    if (!(ratio > 0.0) || !std::isfinite(ratio))
      throw ValidationError("invalid_model", "ratio must be > 0",
                            {{"model.ratio", "must be > 0", {}}});
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale))
      throw ValidationError("invalid_model", "noise_scale must be >= 0",
                            {{"model.noise_scale", "must be >= 0", {}}});
  }
};

enum class Treatment : std::int8_t { undefined = -1, control = 0, treated = 1 };

struct Trajectory {
  std::vector<std::uint8_t> available;  // I_t
  std::vector<Treatment> treatment;     // A_t, undefined iff I_t = 0
  std::vector<double> outcome;          // Y_{t+1}
};

struct FitResult {
  Eigen::VectorXd alpha_hat;
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd sigma_beta_hat;
  double test_statistic = 0.0;
  bool reject = false;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScenarioResult {
  int replications = 0;
  int rejections = 0;
  int failed_fits = 0;
  double empirical_power = 0.0;
  double standard_error = 0.0;
};

/// Piecewise-linear day shapes for effects outside the polynomial classes,
/// returned per decision time and scaled so the mean equals `mean_effect`.
///   a: rises from 0 to a peak at mid-study, then holds the peak;
///   b: same rise, then declines linearly to 0.6 * peak on day D;
///   c: same rise, then declines linearly to 0 on day 0.8 * D, zero after.
inline std::vector<double> effect_shape_curve(EffectShape shape, int days, int per_day,
                                              double mean_effect) {
  if (shape == EffectShape::in_class)
    throw std::invalid_argument("effect_shape_curve: in_class has no fixed shape");
  if (days < 1 || per_day < 1) throw std::invalid_argument("effect_shape_curve: empty grid");
  const int peak_day = std::max(1, days / 2);
  const int zero_day = std::max(peak_day + 1, static_cast<int>(std::lround(0.8 * days)));
  std::vector<double> by_day(static_cast<std::size_t>(days));
  for (int day = 1; day <= days; ++day) {
    double h;
    if (day <= peak_day) {
      h = peak_day == 1 ? 1.0 : static_cast<double>(day - 1) / (peak_day - 1);
    } else if (shape == EffectShape::fig_a1_a) {
      h = 1.0;
    } else if (shape == EffectShape::fig_a1_b) {
      h = 1.0 - 0.4 * static_cast<double>(day - peak_day) / (days - peak_day);
    } else {
      h = day >= zero_day ? 0.0 : 1.0 - static_cast<double>(day - peak_day) / (zero_day - peak_day);
    }
    by_day[static_cast<std::size_t>(day - 1)] = h;
  }
  double mean = 0.0;
  for (double h : by_day) mean += h;
  mean /= days;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(days) * static_cast<std::size_t>(per_day));
  for (int day = 1; day <= days; ++day)
    for (int k = 0; k < per_day; ++k) out.push_back(by_day[static_cast<std::size_t>(day - 1)] * mean_effect / mean);
  return out;
}

/// Average conditional variance sigma-bar_t^2 per decision time, rescaled so
/// its mean over t is 1. incr: 0.5 -> 1.5 linearly; decr: reverse; jump: 0.5
/// for the first half of the study, 1.5 after.
inline std::vector<double> variance_trend_curve(VarianceTrend trend, int decisions) {
  std::vector<double> v(static_cast<std::size_t>(decisions), 1.0);
  if (trend == VarianceTrend::flat || decisions < 2) return v;
  for (int t = 1; t <= decisions; ++t) {
    const double frac = static_cast<double>(t - 1) / (decisions - 1);
    double s = 1.0;
    switch (trend) {
      case VarianceTrend::incr: s = 0.5 + frac; break;
      case VarianceTrend::decr: s = 1.5 - frac; break;
      case VarianceTrend::jump: s = 2 * t <= decisions ? 0.5 : 1.5; break;
      case VarianceTrend::flat: break;
    }
    v[static_cast<std::size_t>(t - 1)] = s;
  }
  double mean = 0.0;
  for (double s : v) mean += s;
  mean /= decisions;
  for (double& s : v) s /= mean;
  return v;
}

/// Everything the generator needs per decision time, precomputed once.
struct SimulationPlan {
  StudyDesign design;       // effect coefficients are the projection when misspecified
  GenerativeModel model;
  std::vector<double> effect;   // true d(t)
  std::vector<double> sigma0;   // outcome sd under A_t = 0
  std::vector<double> sigma1;   // outcome sd under A_t = 1
  std::vector<double> sigma_bar;
  Eigen::MatrixXd block_factor;  // Cholesky factor of the within-day correlation (cs_block)
};

inline SimulationPlan make_plan(const StudyDesign& design, const GenerativeModel& model) {
  model.validate();
  SimulationPlan plan;
  plan.design = design;
  plan.model = model;
  const int total = design.decisions();
  if (model.effect_shape == EffectShape::in_class) {
    plan.effect.resize(static_cast<std::size_t>(total));
    for (int t = 1; t <= total; ++t) plan.effect[static_cast<std::size_t>(t - 1)] = design.effect_at(t);
  } else {
    plan.effect = effect_shape_curve(model.effect_shape, design.days, design.per_day,
                                     design.effect_spec.average);
    plan.design = with_effect_coefficients(design, project_effect(plan.effect, design));
  }
  const auto var = variance_trend_curve(model.variance_trend, total);
  plan.sigma0.resize(static_cast<std::size_t>(total));
  plan.sigma1.resize(static_cast<std::size_t>(total));
  plan.sigma_bar.resize(static_cast<std::size_t>(total));
  const double r2 = model.ratio * model.ratio;
  for (int t = 1; t <= total; ++t) {
    const auto i = static_cast<std::size_t>(t - 1);
    const double rho = design.rho_at(t);
    // sigma-bar^2 = rho * sigma1^2 + (1 - rho) * sigma0^2, sigma1 = ratio * sigma0
    const double s0sq = var[i] / (rho * r2 + 1.0 - rho);
    plan.sigma0[i] = std::sqrt(s0sq) * model.noise_scale;
    plan.sigma1[i] = model.ratio * plan.sigma0[i];
    plan.sigma_bar[i] = std::sqrt(var[i]) * model.noise_scale;
  }
  if (model.error_law == ErrorLaw::cs_block) {
    const int k = design.per_day;
    Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(k, k, model.rho_corr);
    corr.diagonal().setOnes();
    Eigen::LLT<Eigen::MatrixXd> llt(corr);
    if (llt.info() != Eigen::Success)
      throw ValidationError("invalid_model",
                            "cs_block correlation is not positive definite for this many "
                            "decision times per day",
                            {{"model.rho_corr", "need rho_corr > -1/(K-1)", {}}});
    plan.block_factor = llt.matrixL();
  }
  return plan;
}

namespace detail {

// Unit-variance errors for one participant over all T decision times.
template <typename Rng>
void draw_errors(const SimulationPlan& plan, Rng& rng, std::vector<double>& eps) {
  const int total = plan.design.decisions();
  eps.resize(static_cast<std::size_t>(total));
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (plan.model.error_law) {
    case ErrorLaw::iid_normal:
      for (auto& e : eps) e = normal(rng);
      break;
    case ErrorLaw::iid_t3: {
      std::student_t_distribution<double> t3(3.0);
      const double scale = 1.0 / std::sqrt(3.0);
      for (auto& e : eps) e = t3(rng) * scale;
      break;
    }
    case ErrorLaw::iid_centered_exp: {
      std::exponential_distribution<double> ex(1.0);
      for (auto& e : eps) e = ex(rng) - 1.0;
      break;
    }
    case ErrorLaw::ar: {
      // Rows of the Cholesky factor of Sigma_ij = rho^|i-j| give this recursion.
      const double rho = plan.model.rho_corr;
      const double innov = std::sqrt(1.0 - rho * rho);
      double prev = normal(rng);
      eps[0] = prev;
      for (std::size_t i = 1; i < eps.size(); ++i) {
        prev = rho * prev + innov * normal(rng);
        eps[i] = prev;
      }
      break;
    }
    case ErrorLaw::cs_block: {
      const int k = plan.design.per_day;
      Eigen::VectorXd z(k);
      for (int day = 0; day < plan.design.days; ++day) {
        for (int j = 0; j < k; ++j) z[j] = normal(rng);
        const Eigen::VectorXd e = plan.block_factor * z;
        for (int j = 0; j < k; ++j) eps[static_cast<std::size_t>(day * k + j)] = e[j];
      }
      break;
    }
  }
}

}  // namespace detail

/// One participant: I_t ~ Bernoulli(tau_t); A_t ~ Bernoulli(rho_t) when
/// available; Y_{t+1} = (A_t - rho_t) d(t) + sigma_t(A_t) eps_t, with alpha* = 0.
template <typename Rng>
Trajectory generate_trajectory(const SimulationPlan& plan, Rng& rng) {
  const StudyDesign& d = plan.design;
  const int total = d.decisions();
  std::vector<double> eps;
  detail::draw_errors(plan, rng, eps);
  Trajectory tr;
  tr.available.resize(static_cast<std::size_t>(total));
  tr.treatment.resize(static_cast<std::size_t>(total));
  tr.outcome.resize(static_cast<std::size_t>(total));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int t = 1; t <= total; ++t) {
    const auto i = static_cast<std::size_t>(t - 1);
    const bool avail = unif(rng) < d.availability_at(t);
    tr.available[i] = avail ? 1 : 0;
    if (!avail) {
      tr.treatment[i] = Treatment::undefined;
      tr.outcome[i] = plan.sigma_bar[i] * eps[i];
      continue;
    }
    const double rho = d.rho_at(t);
    const bool treated = unif(rng) < rho;
    tr.treatment[i] = treated ? Treatment::treated : Treatment::control;
    const double centered = (treated ? 1.0 : 0.0) - rho;
    const double sd = treated ? plan.sigma1[i] : plan.sigma0[i];
    tr.outcome[i] = centered * plan.effect[i] + sd * eps[i];
  }
  return tr;
}

template <typename Rng>
Trajectory generate_trajectory(const StudyDesign& design, const GenerativeModel& model, Rng& rng) {
  return generate_trajectory(make_plan(design, model), rng);
}

/// Rejection threshold for the statistic N beta^T Sigma^{-1} beta:
/// p(N-q-1)/(N-q-p) * F^{-1}_{p,N-q-p}(1 - alpha0).
inline double test_critical_value(int p, int q, int n, double alpha0) {
  const double df2 = n - q - p;
  return p * static_cast<double>(n - q - 1) / df2 * f_quantile(1.0 - alpha0, p, df2);
}

namespace detail {

inline FitResult fit_with_critical(std::span<const Trajectory> data, const StudyDesign& d,
                                   double critical, SandwichCorrection correction) {
  const int n = static_cast<int>(data.size());
  const int p = d.p;
  const int q = d.q;
  const int dim = p + q;
  const int total = d.decisions();
  if (n < p + q + 1) throw FitError("fewer participants than p + q + 1");

  // Regressor rows X_t = (B_t, (A_t - rho_t) Z_t); B_t and Z_t share the day basis.
  const int bdim = std::max(p, q);
  Eigen::MatrixXd basis(total, bdim);
  for (int t = 1; t <= total; ++t) basis.row(t - 1) = d.basis(t, bdim).transpose();

  auto row = [&](const Trajectory& tr, int i, Eigen::Ref<Eigen::VectorXd> x) {
    const double centered =
        (tr.treatment[static_cast<std::size_t>(i)] == Treatment::treated ? 1.0 : 0.0) - d.rho[static_cast<std::size_t>(i)];
    x.head(q) = basis.row(i).head(q).transpose();
    x.tail(p) = centered * basis.row(i).head(p).transpose();
  };

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd x(dim);
  for (const auto& tr : data) {
    if (static_cast<int>(tr.outcome.size()) != total) throw FitError("trajectory length mismatch");
    for (int i = 0; i < total; ++i) {
      if (!tr.available[static_cast<std::size_t>(i)]) continue;
      row(tr, i, x);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(x);
      rhs += tr.outcome[static_cast<std::size_t>(i)] * x;
    }
  }
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  // Q = gram / N; theta = Q^{-1} (rhs / N) = gram^{-1} rhs.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(ldlt.rcond() > 1e-14))
    throw FitError("singular design matrix Q");
  const Eigen::VectorXd theta = ldlt.solve(rhs);

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd score(dim);
  for (const auto& tr : data) {
    score.setZero();
    if (correction == SandwichCorrection::none) {
      for (int i = 0; i < total; ++i) {
        if (!tr.available[static_cast<std::size_t>(i)]) continue;
        row(tr, i, x);
        score += (tr.outcome[static_cast<std::size_t>(i)] - x.dot(theta)) * x;
      }
    } else {
      // Mancl-DeRouen: score = X_i^T (I - H_ii)^{-1} e_i with H_ii = X_i G^{-1} X_i^T.
      // Woodbury turns this into X_i^T e_i + C_i (G - C_i)^{-1} X_i^T e_i,
      // C_i = X_i^T X_i, so only dim x dim systems are solved.
      Eigen::MatrixXd own = Eigen::MatrixXd::Zero(dim, dim);
      for (int i = 0; i < total; ++i) {
        if (!tr.available[static_cast<std::size_t>(i)]) continue;
        row(tr, i, x);
        own.selfadjointView<Eigen::Lower>().rankUpdate(x);
        score += (tr.outcome[static_cast<std::size_t>(i)] - x.dot(theta)) * x;
      }
      own.triangularView<Eigen::StrictlyUpper>() = own.transpose();
      Eigen::LDLT<Eigen::MatrixXd> rest(gram - own);
      if (rest.info() != Eigen::Success || !rest.isPositive() || !(rest.rcond() > 1e-14))
        throw FitError("leverage correction undefined: one participant identifies the fit");
      score += own * rest.solve(score);
    }
    meat.selfadjointView<Eigen::Lower>().rankUpdate(score);
  }
  meat.triangularView<Eigen::StrictlyUpper>() = meat.transpose();

  // Sigma = Q^{-1} Lambda Q^{-1} with Q = gram / N and Lambda = meat / N,
  // i.e. N * gram^{-1} meat gram^{-1}.
  const Eigen::MatrixXd ginv = ldlt.solve(Eigen::MatrixXd::Identity(dim, dim));
  Eigen::MatrixXd sigma = static_cast<double>(n) * ginv * meat * ginv;
  sigma = 0.5 * (sigma + sigma.transpose());

  FitResult fit;
  fit.alpha_hat = theta.head(q);
  fit.beta_hat = theta.tail(p);
  fit.sigma_beta_hat = sigma.bottomRightCorner(p, p);
  Eigen::LDLT<Eigen::MatrixXd> sb(fit.sigma_beta_hat);
  if (sb.info() != Eigen::Success || !sb.isPositive() || !(sb.rcond() > 1e-14))
    throw FitError("singular sandwich variance for beta");
  fit.test_statistic = n * fit.beta_hat.dot(sb.solve(fit.beta_hat));
  fit.reject = fit.test_statistic > critical;
  return fit;
}

}  // namespace detail

/// Least-squares fit of B_t^T alpha + (A_t - rho_t) Z_t^T beta over available
/// decision times, sandwich variance for sqrt(N) beta-hat, and the F test.
inline FitResult wls_fit(std::span<const Trajectory> data, const StudyDesign& d, double alpha0,
                         SandwichCorrection correction = SandwichCorrection::none) {
  validate_alpha(alpha0);
  const int n = static_cast<int>(data.size());
  if (n < d.p + d.q + 1) throw FitError("fewer participants than p + q + 1");
  return detail::fit_with_critical(data, d, test_critical_value(d.p, d.q, n, alpha0), correction);
}

/// Independent generator for replication `rep` of a run seeded with `seed`.
inline std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32)};
  return std::mt19937_64(seq);
}

struct ScenarioOptions {
  int workers = 0;  // 0: hardware concurrency
  SandwichCorrection correction = SandwichCorrection::none;
};

/// Empirical rejection rate over `replications` independent trials of N
/// participants. Each replication draws from its own (seed, index) stream,
/// so the result does not depend on the worker count.
inline ScenarioResult run_scenario(const SimulationPlan& plan, int n, double alpha0,
                                   int replications, std::uint64_t seed,
                                   const ScenarioOptions& opts = {}) {
  validate_alpha(alpha0);
  if (replications < 1)
    throw ValidationError("invalid_replications", "replications must be >= 1",
                          {{"replications", "must be >= 1", {}}});
  const StudyDesign& d = plan.design;
  if (n < d.p + d.q + 1)
    throw ValidationError("n_too_small", "sample size leaves no denominator degrees of freedom",
                          {{"n", "need N >= p + q + 1", {}}});
  const double critical = test_critical_value(d.p, d.q, n, alpha0);

  std::vector<std::int8_t> outcome(static_cast<std::size_t>(replications), 0);
  auto work = [&](int begin, int stride) {
    std::vector<Trajectory> data(static_cast<std::size_t>(n));
    for (int rep = begin; rep < replications; rep += stride) {
      auto rng = replication_rng(seed, static_cast<std::uint64_t>(rep));
      for (auto& tr : data) tr = generate_trajectory(plan, rng);
      try {
        const FitResult fit = detail::fit_with_critical(data, d, critical, opts.correction);
        outcome[static_cast<std::size_t>(rep)] = fit.reject ? 1 : 0;
      } catch (const FitError&) {
        outcome[static_cast<std::size_t>(rep)] = -1;
      }
    }
  };
  int workers = opts.workers > 0 ? opts.workers : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, replications);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }

  ScenarioResult r;
  r.replications = replications;
  for (auto o : outcome) {
    if (o < 0) ++r.failed_fits;
    else r.rejections += o;
  }
  const int valid = replications - r.failed_fits;
  if (valid > 0) {
    r.empirical_power = static_cast<double>(r.rejections) / valid;
    r.standard_error = std::sqrt(r.empirical_power * (1.0 - r.empirical_power) / valid);
  }
  return r;
}

inline ScenarioResult run_scenario(const StudyDesign& design, const GenerativeModel& model, int n,
                                   double alpha0, int replications, std::uint64_t seed,
                                   const ScenarioOptions& opts = {}) {
  return run_scenario(make_plan(design, model), n, alpha0, replications, seed, opts);
}

}  // namespace mrtss
