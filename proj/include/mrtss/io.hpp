#pragma once

// JSON request/response mapping shared by the CLI and the HTTP service, so
// both front ends emit byte-identical result documents.

#include "json.hpp"  // nlohmann/json, vendored

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mrtss/design.hpp"
#include "mrtss/error.hpp"
#include "mrtss/power.hpp"
#include "mrtss/simulate.hpp"
#include "mrtss/trends.hpp"

namespace mrtss::io {

using Json = nlohmann::ordered_json;

// Resolves a randomization CSV token (from an earlier upload) to a schedule.
using ScheduleLookup = std::function<std::optional<RandomizationSchedule>(const std::string&)>;

enum class RequestKind { samplesize, power };

struct ComputeRequest {
  RequestKind kind = RequestKind::samplesize;
  DesignInputs design;
  double alpha = 0.05;
  std::optional<double> target_power;
  std::optional<int> n;
};

// Shortest round-trip decimal text for a double.
inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

namespace detail {

[[noreturn]] inline void bad_field(const std::string& field, const std::string& what) {
  throw ValidationError("invalid_request", field + ": " + what, {{field, what, {}}});
}

inline const Json& require(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) bad_field(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) bad_field(path.empty() ? key : path + "." + key, "is required");
  return *it;
}

inline double as_number(const Json& v, const std::string& field) {
  if (!v.is_number()) bad_field(field, "expected a number");
  return v.get<double>();
}

inline int as_integer(const Json& v, const std::string& field) {
  if (v.is_number_integer()) {
    const auto x = v.get<std::int64_t>();
    if (x < INT32_MIN || x > INT32_MAX) bad_field(field, "integer out of range");
    return static_cast<int>(x);
  }
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (std::isfinite(x) && x == std::floor(x) && std::fabs(x) < 2e9) return static_cast<int>(x);
  }
  bad_field(field, "expected an integer");
}

inline std::optional<double> opt_number(const Json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return as_number(*it, path + "." + key);
}

}  // namespace detail

inline TrendSpec parse_trend(const Json& j, TrendRole role) {
  const std::string path(to_string(role));
  if (!j.is_object()) detail::bad_field(path, "expected an object");
  const Json& kind_j = detail::require(j, "kind", path);
  if (!kind_j.is_string()) detail::bad_field(path + ".kind", "expected a string");
  auto kind = parse_trend_kind(kind_j.get<std::string>());
  if (!kind) detail::bad_field(path + ".kind", "must be constant, linear or quadratic");
  TrendSpec spec;
  spec.role = role;
  spec.kind = *kind;
  spec.average = detail::as_number(detail::require(j, "average", path), path + ".average");
  spec.initial = detail::opt_number(j, "initial", path);
  if (auto it = j.find("changing_point"); it != j.end() && !it->is_null())
    spec.changing_point = detail::as_integer(*it, path + ".changing_point");
  return spec;
}

inline Json trend_to_json(const TrendSpec& s) {
  Json j;
  j["kind"] = std::string(to_string(s.kind));
  j["average"] = s.average;
  if (s.initial) j["initial"] = *s.initial;
  if (s.changing_point) j["changing_point"] = *s.changing_point;
  return j;
}

inline RandomizationSchedule parse_randomization(const Json& j, const ScheduleLookup& lookup) {
  const std::string path = "randomization";
  if (!j.is_object()) detail::bad_field(path, "expected an object");
  const Json& mode_j = detail::require(j, "mode", path);
  if (!mode_j.is_string()) detail::bad_field(path + ".mode", "expected a string");
  auto mode = parse_schedule_mode(mode_j.get<std::string>());
  if (!mode) detail::bad_field(path + ".mode", "must be constant, per_day or per_time");
  if (*mode == ScheduleMode::constant)
    return RandomizationSchedule::constant(
        detail::as_number(detail::require(j, "probability", path), path + ".probability"));
  if (auto it = j.find("csv_token"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) detail::bad_field(path + ".csv_token", "expected a string");
    std::optional<RandomizationSchedule> s;
    if (lookup) s = lookup(it->get<std::string>());
    if (!s) detail::bad_field(path + ".csv_token", "unknown or expired token");
    if (s->mode != *mode) detail::bad_field(path + ".mode", "does not match the uploaded CSV's mode");
    return *s;
  }
  const Json& values = detail::require(j, "values", path);
  if (!values.is_array()) detail::bad_field(path + ".values", "expected an array");
  RandomizationSchedule s{*mode, {}};
  for (const auto& v : values) s.values.push_back(detail::as_number(v, path + ".values"));
  return s;
}

inline Json randomization_to_json(const RandomizationSchedule& s) {
  Json j;
  j["mode"] = std::string(to_string(s.mode));
  if (s.mode == ScheduleMode::constant) j["probability"] = s.values.at(0);
  else j["values"] = s.values;
  return j;
}

inline DesignInputs parse_design(const Json& j, const ScheduleLookup& lookup = {}) {
  if (!j.is_object()) detail::bad_field("request", "expected a JSON object");
  DesignInputs in;
  in.days = detail::as_integer(detail::require(j, "days", ""), "days");
  in.per_day = detail::as_integer(detail::require(j, "per_day", ""), "per_day");
  in.randomization = parse_randomization(detail::require(j, "randomization", ""), lookup);
  in.availability = parse_trend(detail::require(j, "availability", ""), TrendRole::availability);
  in.effect = parse_trend(detail::require(j, "effect", ""), TrendRole::effect);
  if (auto it = j.find("q"); it != j.end() && !it->is_null()) in.q = detail::as_integer(*it, "q");
  return in;
}

inline Json design_to_json(const DesignInputs& in) {
  Json j;
  j["days"] = in.days;
  j["per_day"] = in.per_day;
  j["randomization"] = randomization_to_json(in.randomization);
  j["availability"] = trend_to_json(in.availability);
  j["effect"] = trend_to_json(in.effect);
  if (in.q) j["q"] = *in.q;
  return j;
}

inline ComputeRequest parse_request(const Json& j, RequestKind kind, const ScheduleLookup& lookup = {}) {
  ComputeRequest r;
  r.kind = kind;
  r.design = parse_design(j, lookup);
  r.alpha = detail::as_number(detail::require(j, "alpha", ""), "alpha");
  if (kind == RequestKind::samplesize)
    r.target_power = detail::as_number(detail::require(j, "target_power", ""), "target_power");
  else
    r.n = detail::as_integer(detail::require(j, "n", ""), "n");
  return r;
}

inline Json inputs_to_json(const ComputeRequest& r, const StudyDesign& d) {
  Json j = design_to_json(r.design);
  j["p"] = d.p;
  j["q"] = d.q;
  j["alpha"] = r.alpha;
  if (r.target_power) j["target_power"] = *r.target_power;
  if (r.n) j["n"] = *r.n;
  return j;
}

inline Json warnings_to_json(const std::vector<Warning>& ws) {
  Json arr = Json::array();
  for (const auto& w : ws) arr.push_back(Json{{"code", w.code}, {"message", w.message}});
  return arr;
}

/// Runs a sample-size or power request. Throws ValidationError or
/// InfeasibleError; the result document leads with the computed value.
inline Json compute(const ComputeRequest& r) {
  const StudyDesign d = build_design(r.design);
  Json out;
  if (r.kind == RequestKind::samplesize) {
    validate_alpha(r.alpha);
    const SampleSizeResult s = solve_sample_size(d, r.alpha, *r.target_power);
    out["kind"] = "samplesize";
    out["result"] = Json{{"sample_size", s.n}, {"power_at_n", s.power_at_n}};
    out["warnings"] = warnings_to_json(s.warnings);
  } else {
    const PowerCalcResult p = compute_power(d, r.alpha, *r.n);
    out["kind"] = "power";
    out["result"] = Json{{"power", p.power}, {"n", p.n}, {"noncentrality", p.noncentrality}};
    out["warnings"] = Json::array();
  }
  out["inputs"] = inputs_to_json(r, d);
  return out;
}

inline Json error_to_json(const ValidationError& e) {
  Json fields = Json::array();
  for (const auto& f : e.fields()) {
    Json fj{{"field", f.field}, {"message", f.message}};
    if (!f.days.empty()) fj["days"] = f.days;
    fields.push_back(std::move(fj));
  }
  return Json{{"error", Json{{"code", e.code()}, {"message", e.what()}, {"fields", fields}}}};
}

inline Json error_to_json(const InfeasibleError& e) {
  return Json{{"error", Json{{"code", "effect_too_small"},
                             {"message", e.what()},
                             {"cap", e.cap()},
                             {"power_at_cap", e.power_at_cap()}}}};
}

// Canonical text form of a result document (shared by CLI and service).
inline std::string to_text(const Json& j) { return j.dump() + "\n"; }

// ---------------------------------------------------------------------------
// Result rows: result first, then every input.

inline const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols = {
      "result",          "quantity",          "days",
      "per_day",         "randomization",     "availability_kind",
      "availability_average", "availability_initial", "availability_changing_point",
      "effect_kind",     "effect_average",    "effect_initial",
      "effect_changing_point", "alpha",       "target_power",
      "n",               "power_at_n",        "warnings"};
  return cols;
}

namespace detail {

inline std::string cell(const Json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number()) return format_number(v.get<double>());
  return v.dump();
}

inline std::string field_or_empty(const Json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? std::string() : cell(*it);
}

inline std::string randomization_label(const Json& r) {
  const std::string mode = r.at("mode").get<std::string>();
  if (mode == "constant") return "constant " + cell(r.at("probability"));
  return mode + " (" + std::to_string(r.at("values").size()) + " values)";
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

inline std::vector<std::string> result_row(const Json& doc) {
  const Json& in = doc.at("inputs");
  const Json& res = doc.at("result");
  const bool ss = doc.at("kind") == "samplesize";
  std::string warnings;
  for (const auto& w : doc.at("warnings")) {
    if (!warnings.empty()) warnings += "; ";
    warnings += w.at("code").get<std::string>();
  }
  const Json& av = in.at("availability");
  const Json& ef = in.at("effect");
  return {ss ? detail::cell(res.at("sample_size")) : detail::cell(res.at("power")),
          ss ? "sample_size" : "power",
          detail::cell(in.at("days")),
          detail::cell(in.at("per_day")),
          detail::randomization_label(in.at("randomization")),
          detail::field_or_empty(av, "kind"),
          detail::field_or_empty(av, "average"),
          detail::field_or_empty(av, "initial"),
          detail::field_or_empty(av, "changing_point"),
          detail::field_or_empty(ef, "kind"),
          detail::field_or_empty(ef, "average"),
          detail::field_or_empty(ef, "initial"),
          detail::field_or_empty(ef, "changing_point"),
          detail::cell(in.at("alpha")),
          detail::field_or_empty(in, "target_power"),
          ss ? detail::cell(res.at("sample_size")) : detail::cell(res.at("n")),
          ss ? detail::cell(res.at("power_at_n")) : "",
          warnings};
}

inline std::string csv_line(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += detail::csv_escape(cells[i]);
  }
  return line + "\n";
}

/// Fixed-width text table, one header line then one line per row.
inline std::string render_table(const std::vector<std::string>& header,
                                const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto emit = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) line += "  ";
      line += cells[c];
      if (c + 1 < cells.size()) line.append(width[c] - cells[c].size(), ' ');
    }
    return line + "\n";
  };
  std::string out = emit(header);
  for (const auto& r : rows) out += emit(r);
  return out;
}

// ---------------------------------------------------------------------------
// Session history.

struct HistoryEntry {
  std::string timestamp;  // ISO-8601 UTC
  Json result;
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json history_to_json(const std::vector<HistoryEntry>& entries) {
  Json arr = Json::array();
  for (const auto& e : entries) arr.push_back(Json{{"timestamp", e.timestamp}, {"result", e.result}});
  return arr;
}

inline std::string history_to_csv(const std::vector<HistoryEntry>& entries) {
  auto header = result_columns();
  header.push_back("timestamp");
  std::string out = csv_line(header);
  for (const auto& e : entries) {
    auto row = result_row(e.result);
    row.push_back(e.timestamp);
    out += csv_line(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation scenario batches.

struct Scenario {
  DesignInputs design;
  GenerativeModel model;
  int n = 10;
  double alpha = 0.05;
  int replications = 1000;
  std::uint64_t seed = 0;
};

inline GenerativeModel parse_model(const Json& j) {
  GenerativeModel m;
  if (j.is_null()) return m;
  if (!j.is_object()) detail::bad_field("model", "expected an object");
  if (auto it = j.find("error_law"); it != j.end()) {
    auto e = it->is_string() ? parse_error_law(it->get<std::string>()) : std::nullopt;
    if (!e) detail::bad_field("model.error_law", "must be iid_normal, iid_t3, iid_centered_exp, ar or cs_block");
    m.error_law = *e;
  }
  if (auto it = j.find("effect_shape"); it != j.end()) {
    auto e = it->is_string() ? parse_effect_shape(it->get<std::string>()) : std::nullopt;
    if (!e) detail::bad_field("model.effect_shape", "must be in_class, fig_a1_a, fig_a1_b or fig_a1_c");
    m.effect_shape = *e;
  }
  if (auto it = j.find("variance_trend"); it != j.end()) {
    auto e = it->is_string() ? parse_variance_trend(it->get<std::string>()) : std::nullopt;
    if (!e) detail::bad_field("model.variance_trend", "must be flat, incr, decr or jump");
    m.variance_trend = *e;
  }
  if (auto v = detail::opt_number(j, "rho_corr", "model")) m.rho_corr = *v;
  if (auto v = detail::opt_number(j, "ratio", "model")) m.ratio = *v;
  if (auto v = detail::opt_number(j, "noise_scale", "model")) m.noise_scale = *v;
  m.validate();
  return m;
}

inline std::vector<Scenario> parse_scenarios(const Json& j, const ScheduleLookup& lookup = {}) {
  const Json* list = &j;
  if (j.is_object()) list = &detail::require(j, "scenarios", "");
  if (!list->is_array()) detail::bad_field("scenarios", "expected an array");
  std::vector<Scenario> out;
  for (const auto& s : *list) {
    Scenario sc;
    sc.design = parse_design(detail::require(s, "design", "scenario"), lookup);
    if (auto it = s.find("model"); it != s.end()) sc.model = parse_model(*it);
    sc.n = detail::as_integer(detail::require(s, "n", "scenario"), "scenario.n");
    if (auto v = detail::opt_number(s, "alpha", "scenario")) sc.alpha = *v;
    if (auto it = s.find("replications"); it != s.end())
      sc.replications = detail::as_integer(*it, "scenario.replications");
    if (auto it = s.find("seed"); it != s.end()) {
      if (!it->is_number_unsigned() && !it->is_number_integer())
        detail::bad_field("scenario.seed", "expected a nonnegative integer");
      sc.seed = it->get<std::uint64_t>();
    }
    out.push_back(std::move(sc));
  }
  return out;
}

struct ScenarioRow {
  int days = 0;
  int per_day = 0;
  int z = 0;  // 0 constant, 1 linear, 2 quadratic
  double mean_effect = 0.0;
  double estimated_power = 0.0;
  ScenarioResult empirical;
};

inline ScenarioRow run(const Scenario& s, const ScenarioOptions& opts = {}) {
  const StudyDesign design = build_design(s.design);
  const SimulationPlan plan = make_plan(design, s.model);
  ScenarioRow row;
  row.days = design.days;
  row.per_day = design.per_day;
  row.z = plan.design.p - 1;
  row.mean_effect = s.design.effect.average;
  row.estimated_power = power_at(plan.design, s.alpha, s.n);
  row.empirical = run_scenario(plan, s.n, s.alpha, s.replications, s.seed, opts);
  return row;
}

inline const std::vector<std::string>& scenario_columns() {
  static const std::vector<std::string> cols = {"D", "K", "Z", "d_bar", "estimated_power",
                                                "empirical_power", "se"};
  return cols;
}

inline std::vector<std::string> scenario_cells(const ScenarioRow& r) {
  return {std::to_string(r.days), std::to_string(r.per_day), std::to_string(r.z),
          format_number(r.mean_effect), format_number(r.estimated_power),
          format_number(r.empirical.empirical_power), format_number(r.empirical.standard_error)};
}

inline std::string scenarios_to_csv(const std::vector<ScenarioRow>& rows) {
  std::string out = csv_line(scenario_columns());
  for (const auto& r : rows) out += csv_line(scenario_cells(r));
  return out;
}

}  // namespace mrtss::io
