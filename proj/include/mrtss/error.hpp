#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mrtss {

// One offending input field. `days` lists 1-based day indices when the
// problem is localized in time (e.g. days with a negative effect).
struct FieldIssue {
  std::string field;
  std::string message;
  std::vector<int> days;
};

// Input validation failure. `code` is a stable machine-readable token shared
// by the CLI and the HTTP service (e.g. "effect_negative", "n_too_small").
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string code, const std::string& message,
                  std::vector<FieldIssue> fields = {})
      : std::invalid_argument(message),
        code_(std::move(code)),
        fields_(std::move(fields)) {}

  const std::string& code() const noexcept { return code_; }
  const std::vector<FieldIssue>& fields() const noexcept { return fields_; }

 private:
  std::string code_;
  std::vector<FieldIssue> fields_;
};

// Numerical kernel failure (bad bracket, non-convergence, truncation cap).
// `residual` carries the best achieved residual or partial-sum error bound.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& message, double residual)
      : std::runtime_error(message), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Sample-size search exhausted its cap without reaching the target power.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& message, int cap, double power_at_cap)
      : std::runtime_error(message), cap_(cap), power_at_cap_(power_at_cap) {}

  int cap() const noexcept { return cap_; }
  double power_at_cap() const noexcept { return power_at_cap_; }

 private:
  int cap_;
  double power_at_cap_;
};

}  // namespace mrtss
