#pragma once

#include <optional>

#include "mrtss/design.hpp"
#include "mrtss/trends.hpp"

namespace fixtures {

inline mrtss::TrendSpec constant_trend(double avg, mrtss::TrendRole role) {
  return {mrtss::TrendKind::constant, avg, std::nullopt, std::nullopt, role};
}

inline mrtss::TrendSpec linear_trend(double avg, double init, mrtss::TrendRole role) {
  return {mrtss::TrendKind::linear, avg, init, std::nullopt, role};
}

inline mrtss::TrendSpec quadratic_trend(double avg, double init, int c, mrtss::TrendRole role) {
  return {mrtss::TrendKind::quadratic, avg, init, c, role};
}

inline mrtss::DesignInputs inputs(int days, int per_day, double rho, double tau,
                                  mrtss::TrendSpec effect) {
  mrtss::DesignInputs in;
  in.days = days;
  in.per_day = per_day;
  in.randomization = mrtss::RandomizationSchedule::constant(rho);
  in.availability = constant_trend(tau, mrtss::TrendRole::availability);
  in.effect = effect;
  return in;
}

// Reference simulation design: tau = 0.7, rho = 0.4, initial effect 0, peak midway.
// z: 0 constant (d = 0.12), 1 linear (0.15), 2 quadratic (0.20).
inline mrtss::DesignInputs reference_design(int days, int per_day, int z) {
  using mrtss::TrendRole;
  switch (z) {
    case 0: return inputs(days, per_day, 0.4, 0.7, constant_trend(0.12, TrendRole::effect));
    case 1: return inputs(days, per_day, 0.4, 0.7, linear_trend(0.15, 0.0, TrendRole::effect));
    default: return inputs(days, per_day, 0.4, 0.7, quadratic_trend(0.20, 0.0, days / 2 + 1, TrendRole::effect));
  }
}

// HeartSteps-style design: D = 42, K = 5, rho = 0.4, quadratic effect from 0
// peaking on day 28, quadratic availability.
inline mrtss::DesignInputs heartsteps(double avg_effect) {
  using mrtss::TrendRole;
  auto in = inputs(42, 5, 0.4, 0.7, quadratic_trend(avg_effect, 0.0, 28, TrendRole::effect));
  in.availability = quadratic_trend(0.7, 0.5, 25, TrendRole::availability);
  return in;
}

}  // namespace fixtures
