#pragma once

// Command-line front end. run() is kept separate from main() so tests can
// drive it with captured streams.

#include "CLI11.hpp"  // vendored

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mrtss/http_server.hpp"
#include "mrtss/io.hpp"

namespace mrtss::cli {

using io::Json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitUsage = 64;

enum class Format { table, csv, json };

struct TrendFlags {
  std::string kind;
  std::optional<double> average;
  std::optional<double> initial;
  std::optional<int> changing_point;
};

struct ComputeFlags {
  std::optional<int> days, per_day, q, n;
  std::optional<double> prob, alpha, power;
  std::string rand_csv, rand_mode = "day";
  TrendFlags avail{"constant", {}, {}, {}};
  TrendFlags effect{"constant", {}, {}, {}};
  std::string input;
};

struct Options {
  std::string output;
  Format format = Format::table;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ValidationError("io_error", "cannot read '" + path + "'", {{"file", "cannot be read", {}}});
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json trend_json(const TrendFlags& t) {
  Json j;
  j["kind"] = t.kind;
  if (t.average) j["average"] = *t.average;
  if (t.initial) j["initial"] = *t.initial;
  if (t.changing_point) j["changing_point"] = *t.changing_point;
  return j;
}

// Flags become the same JSON document the service accepts, so both front
// ends share one parser and produce identical results. Flags given alongside
// --input override the file's fields.
inline Json request_json(const ComputeFlags& f, io::RequestKind kind, const CLI::App& sub) {
  Json j = Json::object();
  if (!f.input.empty()) {
    j = Json::parse(read_file(f.input));
    if (!j.is_object()) throw ValidationError("invalid_request", "input file must hold a JSON object");
  }
  auto given = [&](const char* flag) { return sub.count(flag) > 0; };
  if (f.days) j["days"] = *f.days;
  if (f.per_day) j["per_day"] = *f.per_day;
  if (f.q) j["q"] = *f.q;
  if (f.alpha) j["alpha"] = *f.alpha;
  else if (!j.contains("alpha")) j["alpha"] = 0.05;
  if (kind == io::RequestKind::samplesize && f.power) j["target_power"] = *f.power;
  if (kind == io::RequestKind::power && f.n) j["n"] = *f.n;

  if (!f.rand_csv.empty()) {
    auto mode = parse_schedule_mode(f.rand_mode);
    if (!mode || *mode == ScheduleMode::constant)
      throw ValidationError("invalid_request", "--rand-mode must be day or time",
                            {{"rand_mode", "must be day or time", {}}});
    const int days = j.value("days", 0);
    const int per_day = j.value("per_day", 0);
    const RandomizationSchedule s = parse_probability_csv(read_file(f.rand_csv), *mode, days, per_day);
    j["randomization"] = io::randomization_to_json(s);
  } else if (f.prob) {
    j["randomization"] = Json{{"mode", "constant"}, {"probability", *f.prob}};
  }

  if (given("--avail") || given("--avail-avg") || !j.contains("availability"))
    j["availability"] = trend_json(f.avail);
  if (given("--effect") || given("--effect-avg") || !j.contains("effect"))
    j["effect"] = trend_json(f.effect);
  return j;
}

inline void emit(const Options& o, const std::string& text, std::ostream& out) {
  if (o.output.empty()) {
    out << text;
    return;
  }
  std::ofstream f(o.output, std::ios::binary);
  if (!f) throw ValidationError("io_error", "cannot write '" + o.output + "'", {{"output", "cannot be written", {}}});
  f << text;
}

inline std::string render_result(const Json& doc, Format fmt) {
  switch (fmt) {
    case Format::json: return io::to_text(doc);
    case Format::csv: return io::csv_line(io::result_columns()) + io::csv_line(io::result_row(doc));
    case Format::table: break;
  }
  std::string text = io::render_table(io::result_columns(), {io::result_row(doc)});
  for (const auto& w : doc.at("warnings")) text += "warning: " + w.at("message").get<std::string>() + "\n";
  return text;
}

inline std::string render_scenarios(const std::vector<io::ScenarioRow>& rows, Format fmt) {
  if (fmt == Format::json) {
    Json arr = Json::array();
    for (const auto& r : rows) {
      Json o;
      const auto cells = io::scenario_cells(r);
      for (std::size_t i = 0; i < cells.size(); ++i) o[io::scenario_columns()[i]] = cells[i];
      arr.push_back(std::move(o));
    }
    return io::to_text(arr);
  }
  if (fmt == Format::table) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) cells.push_back(io::scenario_cells(r));
    return io::render_table(io::scenario_columns(), cells);
  }
  return io::scenarios_to_csv(rows);
}

inline void add_format_flag(CLI::App& sub, Format& f, const std::string& help) {
  static const std::map<std::string, Format> names{
      {"table", Format::table}, {"csv", Format::csv}, {"json", Format::json}};
  sub.add_option("--format", f, help)->transform(CLI::CheckedTransformer(names))->option_text("table|csv|json");
}

inline void add_compute_flags(CLI::App& sub, ComputeFlags& f, Options& o, io::RequestKind kind) {
  sub.add_option("--input", f.input, "JSON request file (flags override its fields)");
  sub.add_option("--days", f.days, "study length D in days");
  sub.add_option("--per-day", f.per_day, "decision times per day K");
  sub.add_option("--prob", f.prob, "constant randomization probability");
  sub.add_option("--rand-csv", f.rand_csv, "CSV of index,probability rows");
  sub.add_option("--rand-mode", f.rand_mode, "CSV index unit: day or time");
  sub.add_option("--avail", f.avail.kind, "availability trend: constant, linear, quadratic");
  sub.add_option("--avail-avg", f.avail.average, "average expected availability");
  sub.add_option("--avail-init", f.avail.initial, "initial expected availability");
  sub.add_option("--avail-changing-point", f.avail.changing_point, "day of the availability extremum");
  sub.add_option("--effect", f.effect.kind, "effect trend: constant, linear, quadratic");
  sub.add_option("--effect-avg", f.effect.average, "average standardized effect");
  sub.add_option("--effect-init", f.effect.initial, "initial standardized effect");
  sub.add_option("--effect-peak-day", f.effect.changing_point, "day of the effect peak");
  sub.add_option("--q", f.q, "control-model dimension (default p)");
  sub.add_option("--alpha", f.alpha, "significance level (default 0.05)");
  if (kind == io::RequestKind::samplesize) sub.add_option("--power", f.power, "target power");
  else sub.add_option("--n", f.n, "number of participants");
  add_format_flag(sub, o.format, "output format (default table)");
  sub.add_option("--output", o.output, "write to this file instead of stdout");
}

inline int serve(const service::Endpoint& ep, std::ostream& out) {
  service::Service svc;
  httplib::Server server;
  service::bind(server, svc);
  if (!server.bind_to_port(ep.host, ep.port))
    throw ValidationError("bind_failed", "cannot bind " + ep.host + ":" + std::to_string(ep.port));
  out << "listening on http://" << ep.host << ":" << ep.port << std::endl;
  server.listen_after_bind();
  return kExitOk;
}

/// Parses argv and runs one subcommand. Returns the process exit code.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sample size and power for micro-randomized trials", "mrtss"};
  app.require_subcommand(1, 1);

  ComputeFlags ss_flags, pw_flags;
  Options ss_opts, pw_opts, sim_opts{"", Format::csv};
  auto* ss = app.add_subcommand("samplesize", "minimum sample size for a target power");
  add_compute_flags(*ss, ss_flags, ss_opts, io::RequestKind::samplesize);
  auto* pw = app.add_subcommand("power", "power at a given sample size");
  add_compute_flags(*pw, pw_flags, pw_opts, io::RequestKind::power);

  std::string scenario_file;
  std::optional<std::uint64_t> seed;
  ScenarioOptions sim;
  std::string correction = "none";
  auto* simc = app.add_subcommand("simulate", "run a Monte Carlo scenario file");
  simc->add_option("scenarios", scenario_file, "scenario JSON file")->required();
  simc->add_option("--seed", seed, "base seed; scenario i uses seed + i");
  simc->add_option("--workers", sim.workers, "worker threads (0 = hardware concurrency)");
  simc->add_option("--correction", correction, "sandwich correction: none or mancl_derouen");
  add_format_flag(*simc, sim_opts.format, "output format (default csv)");
  simc->add_option("--output", sim_opts.output, "write to this file instead of stdout");

  service::Endpoint ep = service::endpoint_from_env();
  auto* srv = app.add_subcommand("serve", "start the HTTP JSON service");
  srv->add_option("--host", ep.host, "bind address (env MRTSS_HOST)");
  srv->add_option("--port", ep.port, "port (env MRTSS_PORT)");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    CLI::App* shown = &app;
    for (auto* s : app.get_subcommands()) shown = s;
    err << shown->help();
    return kExitUsage;
  }

  try {
    if (ss->parsed() || pw->parsed()) {
      const bool is_ss = ss->parsed();
      const auto kind = is_ss ? io::RequestKind::samplesize : io::RequestKind::power;
      const auto& f = is_ss ? ss_flags : pw_flags;
      const auto& o = is_ss ? ss_opts : pw_opts;
      const Json req = request_json(f, kind, is_ss ? *ss : *pw);
      const Json doc = io::compute(io::parse_request(req, kind));
      emit(o, render_result(doc, o.format), out);
      return kExitOk;
    }
    if (simc->parsed()) {
      auto corr = parse_sandwich_correction(correction);
      if (!corr)
        throw ValidationError("invalid_request", "--correction must be none or mancl_derouen",
                              {{"correction", "must be none or mancl_derouen", {}}});
      sim.correction = *corr;
      auto scenarios = io::parse_scenarios(Json::parse(read_file(scenario_file)));
      std::vector<io::ScenarioRow> rows;
      for (std::size_t i = 0; i < scenarios.size(); ++i) {
        if (seed) scenarios[i].seed = *seed + i;
        rows.push_back(io::run(scenarios[i], sim));
      }
      emit(sim_opts, render_scenarios(rows, sim_opts.format), out);
      return kExitOk;
    }
    return serve(ep, out);
  } catch (const ValidationError& e) {
    err << io::to_text(io::error_to_json(e));
    return kExitInvalid;
  } catch (const InfeasibleError& e) {
    err << io::to_text(io::error_to_json(e));
    return kExitInvalid;
  } catch (const Json::exception& e) {
    err << io::to_text(Json{{"error", Json{{"code", "malformed_json"}, {"message", e.what()}, {"fields", Json::array()}}}});
    return kExitInvalid;
  }
}

}  // namespace mrtss::cli
