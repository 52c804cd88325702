#pragma once

// cpp-httplib binding for service::Service.

// Eigen must be parsed before httplib: <resolv.h> defines a `_res` macro
// that collides with Eigen parameter names.
#include "mrtss/service.hpp"

#include "httplib.h"  // cpp-httplib, vendored

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <string>

namespace mrtss::service {

inline Request to_request(const httplib::Request& r) {
  Request out;
  out.method = r.method;
  out.path = r.path;
  for (const auto& [k, v] : r.params) out.query.emplace(k, v);
  for (const auto& [k, v] : r.headers) {
    std::string key = k;
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.headers.emplace(std::move(key), v);
  }
  // Multipart uploads carry the CSV in a "file" part.
  if (r.is_multipart_form_data() && r.has_file("file")) out.body = r.get_file_value("file").content;
  else out.body = r.body;
  return out;
}

inline void apply_response(const Response& res, httplib::Response& out) {
  out.status = res.status;
  out.set_content(res.body, res.content_type);
  if (!res.session.empty()) {
    out.set_header("Set-Cookie", std::string(kSessionCookie) + "=" + res.session +
                                     "; Path=/; HttpOnly; SameSite=Lax");
    out.set_header(kSessionHeader, res.session);
  }
  if (res.content_type == "text/csv")
    out.set_header("Content-Disposition", "attachment; filename=\"history.csv\"");
}

/// Registers every route on `server`, forwarding to `svc`.
inline void bind(httplib::Server& server, Service& svc) {
  auto forward = [&svc](const httplib::Request& req, httplib::Response& res) {
    apply_response(svc.handle(to_request(req)), res);
  };
  server.Get(".*", forward);
  server.Post(".*", forward);
  server.Put(".*", forward);
  server.Delete(".*", forward);
}

struct Endpoint {
  std::string host = "127.0.0.1";
  int port = 8080;
};

/// MRTSS_HOST / MRTSS_PORT override the defaults.
inline Endpoint endpoint_from_env(Endpoint def = {}) {
  if (const char* h = std::getenv("MRTSS_HOST"); h && *h) def.host = h;
  if (const char* p = std::getenv("MRTSS_PORT"); p && *p) {
    const int v = std::atoi(p);
    if (v > 0 && v < 65536) def.port = v;
  }
  return def;
}

}  // namespace mrtss::service
