#pragma once

// Transport-independent request handling for the /v1 JSON API: sample-size
// and power computation, randomization CSV uploads, trend previews, and
// per-session result history. http_server.hpp binds this to cpp-httplib.

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrtss/design.hpp"
#include "mrtss/error.hpp"
#include "mrtss/io.hpp"
#include "mrtss/trends.hpp"

namespace mrtss::service {

using io::Json;
using Clock = std::chrono::steady_clock;

inline constexpr const char* kSessionCookie = "mrtss_session";
inline constexpr const char* kSessionHeader = "X-Session-Id";
inline constexpr int kPreviewRows = 10;

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::string session;  // token to hand back to the client
};

struct Options {
  std::chrono::seconds session_ttl{std::chrono::hours(4)};
  std::size_t max_sessions = 10000;
};

class Service {
 public:
  explicit Service(Options opts = {}) : opts_(opts), rng_(std::random_device{}()) {}

  Response handle(const Request& req) {
    Response res;
    res.session = resolve_session(req);
    try {
      route(req, res);
    } catch (const ValidationError& e) {
      res.status = 400;
      res.body = io::to_text(io::error_to_json(e));
    } catch (const InfeasibleError& e) {
      res.status = 422;
      res.body = io::to_text(io::error_to_json(e));
    } catch (const Json::exception& e) {
      res.status = 400;
      res.body = io::to_text(error_body("malformed_json", e.what()));
    } catch (const std::exception& e) {
      res.status = 500;
      res.body = io::to_text(error_body("internal_error", e.what()));
    }
    res.content_type = res.content_type.empty() ? "application/json" : res.content_type;
    return res;
  }

  std::vector<io::HistoryEntry> history(const std::string& token) {
    auto s = find_session(token);
    if (!s) return {};
    std::lock_guard lock(s->mu);
    return s->entries;
  }

  std::size_t session_count() {
    std::lock_guard lock(mu_);
    return sessions_.size();
  }

 private:
  struct Session {
    std::mutex mu;
    std::vector<io::HistoryEntry> entries;
    Clock::time_point last_access;
  };

  struct StoredSchedule {
    RandomizationSchedule schedule;
    Clock::time_point created;
  };

  static Json error_body(const std::string& code, const std::string& message) {
    return Json{{"error", Json{{"code", code}, {"message", message}, {"fields", Json::array()}}}};
  }

  std::string new_token() {
    static constexpr char hex[] = "0123456789abcdef";
    std::uniform_int_distribution<int> nib(0, 15);
    std::string t(32, '0');
    for (auto& c : t) c = hex[nib(rng_)];
    return t;
  }

  void purge_locked(Clock::time_point now) {
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      if (now - it->second->last_access > opts_.session_ttl) it = sessions_.erase(it);
      else ++it;
    }
    for (auto it = schedules_.begin(); it != schedules_.end();) {
      if (now - it->second.created > opts_.session_ttl) it = schedules_.erase(it);
      else ++it;
    }
  }

  static std::optional<std::string> token_from(const Request& req) {
    auto h = req.headers.find("x-session-id");
    if (h != req.headers.end() && !h->second.empty()) return h->second;
    auto a = req.headers.find("authorization");
    if (a != req.headers.end() && a->second.rfind("Bearer ", 0) == 0) return a->second.substr(7);
    auto c = req.headers.find("cookie");
    if (c != req.headers.end()) {
      const std::string key = std::string(kSessionCookie) + "=";
      const std::string& cookies = c->second;
      std::size_t pos = 0;
      while (pos < cookies.size()) {
        std::size_t end = cookies.find(';', pos);
        if (end == std::string::npos) end = cookies.size();
        std::string part = cookies.substr(pos, end - pos);
        while (!part.empty() && part.front() == ' ') part.erase(part.begin());
        if (part.rfind(key, 0) == 0) return part.substr(key.size());
        pos = end + 1;
      }
    }
    return std::nullopt;
  }

  // Unknown or missing tokens start a fresh, empty session.
  std::string resolve_session(const Request& req) {
    const auto now = Clock::now();
    std::lock_guard lock(mu_);
    purge_locked(now);
    if (auto t = token_from(req)) {
      auto it = sessions_.find(*t);
      if (it != sessions_.end()) {
        it->second->last_access = now;
        return *t;
      }
    }
    if (sessions_.size() >= opts_.max_sessions) {
      auto oldest = sessions_.begin();
      for (auto it = sessions_.begin(); it != sessions_.end(); ++it)
        if (it->second->last_access < oldest->second->last_access) oldest = it;
      sessions_.erase(oldest);
    }
    std::string token = new_token();
    auto s = std::make_shared<Session>();
    s->last_access = now;
    sessions_.emplace(token, std::move(s));
    return token;
  }

  std::shared_ptr<Session> find_session(const std::string& token) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(token);
    return it == sessions_.end() ? nullptr : it->second;
  }

  std::optional<RandomizationSchedule> lookup_schedule(const std::string& token) {
    std::lock_guard lock(mu_);
    auto it = schedules_.find(token);
    if (it == schedules_.end()) return std::nullopt;
    return it->second.schedule;
  }

  void append(const std::string& token, Json result) {
    auto s = find_session(token);
    if (!s) return;
    std::lock_guard lock(s->mu);
    s->entries.push_back({io::utc_timestamp(std::chrono::system_clock::now()), std::move(result)});
  }

  static Json parse_body(const Request& req) {
    Json j = Json::parse(req.body);  // throws Json::parse_error
    if (!j.is_object())
      throw ValidationError("invalid_request", "request body must be a JSON object");
    return j;
  }

  static std::string query_or(const Request& req, const std::string& key, const std::string& def) {
    auto it = req.query.find(key);
    return it == req.query.end() ? def : it->second;
  }

  static int query_int(const Request& req, const std::string& key) {
    auto it = req.query.find(key);
    if (it == req.query.end())
      throw ValidationError("invalid_request", "missing query parameter '" + key + "'",
                            {{key, "is required", {}}});
    int v = 0;
    const auto& s = it->second;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ValidationError("invalid_request", "query parameter '" + key + "' must be an integer",
                            {{key, "must be an integer", {}}});
    return v;
  }

  static double query_number(const Request& req, const std::string& key) {
    auto it = req.query.find(key);
    if (it == req.query.end())
      throw ValidationError("invalid_request", "missing query parameter '" + key + "'",
                            {{key, "is required", {}}});
    double v = 0;
    const auto& s = it->second;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ValidationError("invalid_request", "query parameter '" + key + "' must be a number",
                            {{key, "must be a number", {}}});
    return v;
  }

  void compute(const Request& req, Response& res, io::RequestKind kind) {
    const Json body = parse_body(req);
    auto lookup = [this](const std::string& t) { return lookup_schedule(t); };
    const io::ComputeRequest cr = io::parse_request(body, kind, lookup);
    Json out = io::compute(cr);
    res.body = io::to_text(out);
    append(res.session, std::move(out));
  }

  void upload_csv(const Request& req, Response& res) {
    const std::string mode_s = query_or(req, "mode", "");
    auto mode = parse_schedule_mode(mode_s);
    if (!mode || *mode == ScheduleMode::constant)
      throw ValidationError("invalid_request", "query parameter 'mode' must be per_day or per_time",
                            {{"mode", "must be per_day or per_time", {}}});
    const int days = query_int(req, "days");
    const int per_day = query_int(req, "per_day");
    RandomizationSchedule s = parse_probability_csv(req.body, *mode, days, per_day);
    Json preview = Json::array();
    for (std::size_t i = 0; i < s.values.size() && i < static_cast<std::size_t>(kPreviewRows); ++i)
      preview.push_back(Json{{"index", i + 1}, {"probability", s.values[i]}});
    std::string token;
    {
      std::lock_guard lock(mu_);
      token = new_token();
      schedules_[token] = {s, Clock::now()};
    }
    Json out{{"token", token},
             {"mode", std::string(to_string(s.mode))},
             {"rows", s.values.size()},
             {"preview", preview}};
    res.body = io::to_text(out);
  }

  void trend_preview(const Request& req, Response& res) {
    const std::string role_s = query_or(req, "role", "effect");
    if (role_s != "effect" && role_s != "availability")
      throw ValidationError("invalid_request", "role must be effect or availability",
                            {{"role", "must be effect or availability", {}}});
    const TrendRole role = role_s == "effect" ? TrendRole::effect : TrendRole::availability;
    Json spec_j{{"kind", query_or(req, "kind", "")}, {"average", query_number(req, "average")}};
    if (req.query.count("initial")) spec_j["initial"] = query_number(req, "initial");
    if (req.query.count("changing_point")) {
      const double cp = query_number(req, "changing_point");
      spec_j["changing_point"] = cp;
    }
    const TrendSpec spec = io::parse_trend(spec_j, role);
    const int days = query_int(req, "days");
    const DayCurve curve = build_valid_curve(spec, days);
    Json day_index = Json::array();
    for (int d = 1; d <= days; ++d) day_index.push_back(d);
    Json out{{"role", role_s}, {"trend", io::trend_to_json(spec)}, {"days", day_index}};
    if (role == TrendRole::effect) {
      out["series"] = Json{{"null", std::vector<double>(curve.values.size(), 0.0)},
                           {"average", std::vector<double>(curve.values.size(), spec.average)},
                           {"alternative", curve.values}};
    } else {
      out["series"] = Json{{"availability", curve.values}};
    }
    res.body = io::to_text(out);
  }

  void route(const Request& req, Response& res) {
    if (req.method == "POST" && req.path == "/v1/samplesize") return compute(req, res, io::RequestKind::samplesize);
    if (req.method == "POST" && req.path == "/v1/power") return compute(req, res, io::RequestKind::power);
    if (req.method == "POST" && req.path == "/v1/randomization-csv") return upload_csv(req, res);
    if (req.method == "GET" && req.path == "/v1/trend/preview") return trend_preview(req, res);
    if (req.method == "GET" && req.path == "/v1/history") {
      res.body = io::to_text(Json{{"session", res.session}, {"entries", io::history_to_json(history(res.session))}});
      return;
    }
    if (req.method == "GET" && req.path == "/v1/history/export") {
      const std::string format = query_or(req, "format", "json");
      if (format == "csv") {
        res.content_type = "text/csv";
        res.body = io::history_to_csv(history(res.session));
      } else if (format == "json") {
        res.body = io::to_text(io::history_to_json(history(res.session)));
      } else {
        throw ValidationError("invalid_request", "format must be csv or json",
                              {{"format", "must be csv or json", {}}});
      }
      return;
    }
    if (req.method == "GET" && req.path == "/healthz") {
      res.body = io::to_text(Json{{"status", "ok"}});
      return;
    }
    res.status = 404;
    res.body = io::to_text(error_body("not_found", req.method + " " + req.path));
  }

  Options opts_;
  std::mutex mu_;
  std::mt19937_64 rng_;
  std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
  std::unordered_map<std::string, StoredSchedule> schedules_;
};

}  // namespace mrtss::service
