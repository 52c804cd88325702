#pragma once

// Day-indexed trend curves for expected availability and the standardized
// proximal effect, built from the three elicitation classes (constant,
// linear, quadratic). Curves are constant within a day.

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mrtss/error.hpp"

namespace mrtss {

enum class TrendKind { constant, linear, quadratic };
enum class TrendRole { availability, effect };

inline std::string_view to_string(TrendKind k) {
  switch (k) {
    case TrendKind::constant: return "constant";
    case TrendKind::linear: return "linear";
    case TrendKind::quadratic: return "quadratic";
  }
  return "constant";
}

inline std::string_view to_string(TrendRole r) {
  return r == TrendRole::availability ? "availability" : "effect";
}

inline std::optional<TrendKind> parse_trend_kind(std::string_view s) {
  if (s == "constant") return TrendKind::constant;
  if (s == "linear") return TrendKind::linear;
  if (s == "quadratic") return TrendKind::quadratic;
  return std::nullopt;
}

struct TrendSpec {
  TrendKind kind = TrendKind::constant;
  double average = 0.0;
  std::optional<double> initial;        // linear, quadratic
  std::optional<int> changing_point;    // quadratic; 1-based day of the extremum
  TrendRole role = TrendRole::effect;

  // Number of basis functions this class needs (1, 2 or 3).
  int basis_dim() const { return static_cast<int>(kind) + 1; }
};

struct DayCurve {
  std::vector<double> values;  // values[day - 1], day = 1..D

  int days() const { return static_cast<int>(values.size()); }
  double at_day(int day) const { return values.at(static_cast<std::size_t>(day - 1)); }
  double mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
  }
};

namespace detail {

inline std::string trend_field(TrendRole role) { return std::string(to_string(role)); }

// M(c) = (1/D) * sum_{day=1..D} (day - c)^2
inline double mean_squared_offset(int days, double c) {
  double s = 0.0;
  for (int day = 1; day <= days; ++day) s += (day - c) * (day - c);
  return s / days;
}

struct QuadraticParams {
  double vertex_value;  // v
  double curvature;     // kappa
  double c;
};

inline QuadraticParams quadratic_params(const TrendSpec& spec, int days) {
  const double c = *spec.changing_point;
  const double m = mean_squared_offset(days, c);
  const double denom = (1.0 - c) * (1.0 - c) - m;
  if (std::fabs(denom) < 1e-12) {
    throw ValidationError("degenerate_trend",
                          "quadratic trend is degenerate: the changing point makes the initial "
                          "value indistinguishable from the average",
                          {{trend_field(spec.role) + ".changing_point",
                            "degenerate for this study length", {}}});
  }
  const double kappa = (*spec.initial - spec.average) / denom;
  return {spec.average - kappa * m, kappa, c};
}

inline void check_spec(const TrendSpec& spec, int days) {
  const std::string f = trend_field(spec.role);
  if (days < 1) throw ValidationError("invalid_days", "days must be >= 1", {{"days", "must be >= 1", {}}});
  if (!std::isfinite(spec.average))
    throw ValidationError("invalid_trend", f + ": average must be finite", {{f + ".average", "must be finite", {}}});
  switch (spec.kind) {
    case TrendKind::constant:
      if (spec.initial || spec.changing_point)
        throw ValidationError("invalid_trend", f + ": constant trend takes only an average",
                              {{f, "constant trend takes only an average", {}}});
      break;
    case TrendKind::linear:
      if (!spec.initial || !std::isfinite(*spec.initial))
        throw ValidationError("invalid_trend", f + ": linear trend requires an initial value",
                              {{f + ".initial", "required for linear trends", {}}});
      if (spec.changing_point)
        throw ValidationError("invalid_trend", f + ": linear trend has no changing point",
                              {{f + ".changing_point", "not allowed for linear trends", {}}});
      if (days == 1 && spec.average != *spec.initial)
        throw ValidationError("invalid_trend", f + ": a one-day linear trend needs average == initial",
                              {{f + ".initial", "must equal average when days = 1", {}}});
      break;
    case TrendKind::quadratic:
      if (!spec.initial || !std::isfinite(*spec.initial))
        throw ValidationError("invalid_trend", f + ": quadratic trend requires an initial value",
                              {{f + ".initial", "required for quadratic trends", {}}});
      if (!spec.changing_point)
        throw ValidationError("invalid_trend", f + ": quadratic trend requires a changing point",
                              {{f + ".changing_point", "required for quadratic trends", {}}});
      if (*spec.changing_point < 1 || *spec.changing_point > days) {
        std::ostringstream os;
        os << "must be a day in [1, " << days << "]";
        throw ValidationError("invalid_trend", f + ": changing point out of range",
                              {{f + ".changing_point", os.str(), {}}});
      }
      break;
  }
}

}  // namespace detail

/// Materializes the trend over days 1..D. The curve's mean over days equals
/// `average`, and linear/quadratic curves take the value `initial` on day 1.
inline DayCurve build_curve(const TrendSpec& spec, int days) {
  detail::check_spec(spec, days);
  DayCurve curve;
  curve.values.resize(static_cast<std::size_t>(days));
  switch (spec.kind) {
    case TrendKind::constant:
      for (auto& v : curve.values) v = spec.average;
      break;
    case TrendKind::linear: {
      const double init = *spec.initial;
      const double slope = days > 1 ? 2.0 * (spec.average - init) / (days - 1) : 0.0;
      for (int day = 1; day <= days; ++day) curve.values[day - 1] = init + slope * (day - 1);
      break;
    }
    case TrendKind::quadratic: {
      const auto q = detail::quadratic_params(spec, days);
      for (int day = 1; day <= days; ++day)
        curve.values[day - 1] = q.vertex_value + q.curvature * (day - q.c) * (day - q.c);
      curve.values[0] = *spec.initial;
      break;
    }
  }
  return curve;
}

/// Range checks for a built curve. Returns the issues found (empty when the
/// curve is acceptable): effects must be nonnegative on every day and
/// availabilities must lie in [0, 1].
inline std::vector<FieldIssue> validate_curve(const DayCurve& curve, TrendRole role) {
  constexpr double slack = 1e-12;  // rounding in the closed-form evaluation
  std::vector<FieldIssue> issues;
  std::vector<int> bad;
  for (int day = 1; day <= curve.days(); ++day) {
    const double v = curve.at_day(day);
    const bool ok = role == TrendRole::effect ? (v >= -slack) : (v >= -slack && v <= 1.0 + slack);
    if (!ok || !std::isfinite(v)) bad.push_back(day);
  }
  if (bad.empty()) return issues;
  if (role == TrendRole::effect) {
    issues.push_back({"effect",
                      "the specified trend gives a negative proximal effect on some days", bad});
  } else {
    issues.push_back({"availability",
                      "the specified trend gives an expected availability outside [0, 1] on some days",
                      bad});
  }
  return issues;
}

inline std::string_view curve_error_code(TrendRole role) {
  return role == TrendRole::effect ? "effect_negative" : "availability_out_of_range";
}

/// build_curve followed by validate_curve; throws on any issue.
inline DayCurve build_valid_curve(const TrendSpec& spec, int days) {
  DayCurve curve = build_curve(spec, days);
  auto issues = validate_curve(curve, spec.role);
  if (!issues.empty()) {
    const std::string msg = issues.front().message;
    throw ValidationError(std::string(curve_error_code(spec.role)), msg, std::move(issues));
  }
  return curve;
}

/// Coefficients d in the polynomial day basis (1, g, g^2), g = day - 1, such
/// that the basis expansion reproduces build_curve exactly.
inline std::vector<double> effect_basis_coefficients(const TrendSpec& spec, int days) {
  detail::check_spec(spec, days);
  switch (spec.kind) {
    case TrendKind::constant:
      return {spec.average};
    case TrendKind::linear: {
      const double slope = days > 1 ? 2.0 * (spec.average - *spec.initial) / (days - 1) : 0.0;
      return {*spec.initial, slope};
    }
    case TrendKind::quadratic: {
      const auto q = detail::quadratic_params(spec, days);
      const double shift = 1.0 - q.c;
      return {q.vertex_value + q.curvature * shift * shift, 2.0 * q.curvature * shift, q.curvature};
    }
  }
  return {};
}

}  // namespace mrtss
