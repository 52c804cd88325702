#pragma once

// Trial description: decision-time grid, randomization probabilities,
// availability curve, effect basis and coefficients, plus the information
// matrix that drives the non-centrality parameter.

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mrtss/error.hpp"
#include "mrtss/trends.hpp"

namespace mrtss {

enum class ScheduleMode { constant, per_day, per_time };

inline std::string_view to_string(ScheduleMode m) {
  switch (m) {
    case ScheduleMode::constant: return "constant";
    case ScheduleMode::per_day: return "per_day";
    case ScheduleMode::per_time: return "per_time";
  }
  return "constant";
}

inline std::optional<ScheduleMode> parse_schedule_mode(std::string_view s) {
  if (s == "constant") return ScheduleMode::constant;
  if (s == "per_day" || s == "day") return ScheduleMode::per_day;
  if (s == "per_time" || s == "time") return ScheduleMode::per_time;
  return std::nullopt;
}

struct RandomizationSchedule {
  ScheduleMode mode = ScheduleMode::constant;
  std::vector<double> values;  // one value (constant), D values or T values

  static RandomizationSchedule constant(double p) { return {ScheduleMode::constant, {p}}; }
};

struct DesignInputs {
  int days = 0;
  int per_day = 0;
  RandomizationSchedule randomization;
  TrendSpec availability{TrendKind::constant, 1.0, std::nullopt, std::nullopt,
                         TrendRole::availability};
  TrendSpec effect{TrendKind::constant, 0.0, std::nullopt, std::nullopt, TrendRole::effect};
  std::optional<int> q;  // working-model dimension; defaults to p
};

struct StudyDesign {
  int days = 0;
  int per_day = 0;
  std::vector<double> rho;       // rho[t - 1], t = 1..T
  DayCurve availability;         // expected availability per day
  TrendSpec effect_spec;
  Eigen::VectorXd effect;        // d, length p
  int p = 1;
  int q = 1;

  int decisions() const { return days * per_day; }
  // Days elapsed at decision time t (1-based): floor((t - 1) / K).
  int elapsed_days(int t) const { return (t - 1) / per_day; }
  double availability_at(int t) const { return availability.values[elapsed_days(t)]; }
  double rho_at(int t) const { return rho[static_cast<std::size_t>(t - 1)]; }

  // Polynomial day basis (1, g, ..., g^{dim-1}) at decision time t.
  Eigen::VectorXd basis(int t, int dim) const {
    Eigen::VectorXd z(dim);
    const double g = elapsed_days(t);
    double pw = 1.0;
    for (int k = 0; k < dim; ++k) {
      z[k] = pw;
      pw *= g;
    }
    return z;
  }

  // Standardized effect Z_t^T d at decision time t.
  double effect_at(int t) const { return basis(t, p).dot(effect); }
};

namespace detail {

inline bool is_probability(double v) { return std::isfinite(v) && v > 0.0 && v < 1.0; }

inline std::vector<double> materialize_schedule(const RandomizationSchedule& s, int days,
                                                int per_day) {
  const int total = days * per_day;
  std::vector<double> rho;
  rho.reserve(static_cast<std::size_t>(total));
  std::size_t expected = 1;
  if (s.mode == ScheduleMode::per_day) expected = static_cast<std::size_t>(days);
  if (s.mode == ScheduleMode::per_time) expected = static_cast<std::size_t>(total);
  if (s.values.size() != expected) {
    std::ostringstream os;
    os << "randomization schedule (" << to_string(s.mode) << ") needs " << expected
       << " values, got " << s.values.size();
    throw ValidationError("randomization_length", os.str(),
                          {{"randomization.values", os.str(), {}}});
  }
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    if (!is_probability(s.values[i])) {
      std::ostringstream os;
      os << "randomization probability at index " << (i + 1) << " must lie in (0, 1) (got "
         << s.values[i] << ")";
      throw ValidationError("invalid_randomization", os.str(),
                            {{"randomization.values", os.str(), {}}});
    }
  }
  for (int t = 1; t <= total; ++t) {
    switch (s.mode) {
      case ScheduleMode::constant: rho.push_back(s.values[0]); break;
      case ScheduleMode::per_day: rho.push_back(s.values[static_cast<std::size_t>((t - 1) / per_day)]); break;
      case ScheduleMode::per_time: rho.push_back(s.values[static_cast<std::size_t>(t - 1)]); break;
    }
  }
  return rho;
}

}  // namespace detail

/// Validates the inputs and materializes rho_t for every decision time.
inline StudyDesign build_design(const DesignInputs& in) {
  if (in.days < 1)
    throw ValidationError("invalid_days", "days must be >= 1", {{"days", "must be >= 1", {}}});
  if (in.per_day < 1)
    throw ValidationError("invalid_per_day", "decision times per day must be >= 1",
                          {{"per_day", "must be >= 1", {}}});
  if (in.availability.role != TrendRole::availability || in.effect.role != TrendRole::effect)
    throw ValidationError("invalid_trend", "trend roles do not match their slots");

  StudyDesign d;
  d.days = in.days;
  d.per_day = in.per_day;
  d.rho = detail::materialize_schedule(in.randomization, in.days, in.per_day);
  d.availability = build_valid_curve(in.availability, in.days);
  build_valid_curve(in.effect, in.days);
  d.effect_spec = in.effect;
  const auto coef = effect_basis_coefficients(in.effect, in.days);
  d.p = static_cast<int>(coef.size());
  d.effect = Eigen::Map<const Eigen::VectorXd>(coef.data(), d.p);
  d.q = in.q.value_or(d.p);
  if (d.q < 1)
    throw ValidationError("invalid_q", "working-model dimension q must be >= 1",
                          {{"q", "must be >= 1", {}}});
  return d;
}

/// Parses an `index,probability` CSV. Indices are 1-based and must cover
/// 1..D (per_day) or 1..T (per_time) exactly once, in any order.
inline RandomizationSchedule parse_probability_csv(std::string_view text, ScheduleMode mode,
                                                   int days, int per_day) {
  if (mode == ScheduleMode::constant)
    throw ValidationError("invalid_randomization", "CSV schedules must be per_day or per_time");
  const int expected = mode == ScheduleMode::per_day ? days : days * per_day;
  if (expected < 1)
    throw ValidationError("invalid_days", "days and per_day must be >= 1");

  auto fail = [](int line, const std::string& what) -> ValidationError {
    std::ostringstream os;
    os << "line " << line << ": " << what;
    return ValidationError("csv_parse", os.str(), {{"csv", os.str(), {}}});
  };

  std::vector<double> values(static_cast<std::size_t>(expected), 0.0);
  std::vector<bool> seen(static_cast<std::size_t>(expected), false);
  std::size_t pos = 0;
  int line_no = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != "index,probability") throw fail(line_no, "expected header 'index,probability'");
      header_seen = true;
      continue;
    }
    if (line.empty()) {
      if (pos >= text.size()) break;  // trailing newline
      throw fail(line_no, "empty row");
    }
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos)
      throw fail(line_no, "expected 'index,probability'");
    const std::string_view idx_s = line.substr(0, comma);
    const std::string_view prob_s = line.substr(comma + 1);
    int index = 0;
    auto [ip, iec] = std::from_chars(idx_s.data(), idx_s.data() + idx_s.size(), index);
    if (iec != std::errc() || ip != idx_s.data() + idx_s.size() || idx_s.empty())
      throw fail(line_no, "malformed index '" + std::string(idx_s) + "'");
    double prob = 0.0;
    auto [pp, pec] = std::from_chars(prob_s.data(), prob_s.data() + prob_s.size(), prob,
                                     std::chars_format::fixed);
    if (pec != std::errc() || pp != prob_s.data() + prob_s.size() || prob_s.empty())
      throw fail(line_no, "malformed probability '" + std::string(prob_s) + "'");
    if (index < 1 || index > expected) {
      std::ostringstream os;
      os << "index " << index << " outside 1.." << expected;
      throw fail(line_no, os.str());
    }
    if (seen[static_cast<std::size_t>(index - 1)]) {
      std::ostringstream os;
      os << "duplicate index " << index;
      throw fail(line_no, os.str());
    }
    if (!detail::is_probability(prob)) {
      std::ostringstream os;
      os << "probability " << prob_s << " for index " << index << " must lie in (0, 1)";
      throw fail(line_no, os.str());
    }
    seen[static_cast<std::size_t>(index - 1)] = true;
    values[static_cast<std::size_t>(index - 1)] = prob;
  }
  if (!header_seen) throw fail(1, "expected header 'index,probability'");
  std::vector<int> missing;
  for (int i = 0; i < expected; ++i)
    if (!seen[static_cast<std::size_t>(i)]) missing.push_back(i + 1);
  if (!missing.empty()) {
    std::ostringstream os;
    os << "missing index " << missing.front();
    if (missing.size() > 1) os << " (and " << missing.size() - 1 << " more)";
    throw ValidationError("csv_parse", os.str(), {{"csv", os.str(), missing}});
  }
  return {mode, std::move(values)};
}

namespace detail {

// Positive-definiteness check on the unit-diagonal rescaling of m, so the
// polynomial basis' growing scale (g^2 reaches D^2) does not trip it.
inline void require_nonsingular(const Eigen::MatrixXd& m, const char* what) {
  const Eigen::VectorXd diag = m.diagonal();
  bool ok = (diag.array() > 0.0).all() && diag.allFinite();
  if (ok) {
    const Eigen::VectorXd s = diag.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd scaled = s.asDiagonal() * m * s.asDiagonal();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(scaled);
    ok = ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-12;
  }
  if (!ok) {
    throw ValidationError("singular_design",
                          std::string(what) +
                              " is singular: the design cannot identify the effect basis "
                              "(check availability and the number of days)");
  }
}

}  // namespace detail

/// M = sum_t tau_t * rho_t (1 - rho_t) * Z_t Z_t^T  (p x p).
inline Eigen::MatrixXd information_matrix(const StudyDesign& d) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d.p, d.p);
  for (int t = 1; t <= d.decisions(); ++t) {
    const Eigen::VectorXd z = d.basis(t, d.p);
    const double r = d.rho_at(t);
    m.noalias() += (d.availability_at(t) * r * (1.0 - r)) * (z * z.transpose());
  }
  detail::require_nonsingular(m, "information matrix");
  return m;
}

/// Availability-weighted least-squares projection of a per-decision-time
/// effect curve onto the design's Z basis:
///   d = (sum tau Z Z^T)^{-1} sum tau Z d(t).
inline Eigen::VectorXd project_effect(std::span<const double> effect_by_time,
                                      const StudyDesign& d) {
  if (static_cast<int>(effect_by_time.size()) != d.decisions())
    throw ValidationError("effect_length", "effect curve length must equal the number of decision times");
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d.p, d.p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d.p);
  for (int t = 1; t <= d.decisions(); ++t) {
    const Eigen::VectorXd z = d.basis(t, d.p);
    const double w = d.availability_at(t);
    gram.noalias() += w * (z * z.transpose());
    rhs += (w * effect_by_time[static_cast<std::size_t>(t - 1)]) * z;
  }
  detail::require_nonsingular(gram, "projection Gram matrix");
  return gram.ldlt().solve(rhs);
}

/// Copy of `d` whose effect is replaced by explicit basis coefficients.
inline StudyDesign with_effect_coefficients(StudyDesign d, const Eigen::VectorXd& coef) {
  d.p = static_cast<int>(coef.size());
  d.effect = coef;
  return d;
}

}  // namespace mrtss
