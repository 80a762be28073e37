#pragma once

#include <chrono>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "inctrl/errors.hpp"

namespace inctrl::http {

using json = nlohmann::json;

/// Transport failures and 5xx responses are retried; everything else is not.
struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{120};
};

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'
};

inline Endpoint parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ParseError("url without scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline Endpoint join(Endpoint base, const std::string& suffix) {
  if (!base.path.empty() && base.path.back() == '/') base.path.pop_back();
  base.path += suffix;
  return base;
}

struct Failure {
  int status = 0;  // 0 = transport error
  std::string message;
};

/// POSTs a JSON body and returns the parsed JSON reply. On failure after the
/// retry budget, calls `on_failure` (which must throw).
template <class OnFailure>
json post_json(const Endpoint& ep, const json& body, const RetryPolicy& policy,
               OnFailure&& on_failure) {
  const std::string payload = body.dump();
  auto backoff = policy.initial_backoff;
  Failure last;
  for (int attempt = 0; attempt < policy.attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(ep.origin);
    client.set_connection_timeout(policy.timeout);
    client.set_read_timeout(policy.timeout);
    client.set_write_timeout(policy.timeout);
    auto res = client.Post(ep.path, payload, "application/json");
    if (!res) {
      last = {0, "transport error: " + httplib::to_string(res.error())};
      continue;
    }
    if (res->status >= 500) {
      last = {res->status, "HTTP " + std::to_string(res->status)};
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      on_failure(Failure{res->status, "HTTP " + std::to_string(res->status) + ": " + res->body});
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      on_failure(Failure{res->status, std::string("malformed reply: ") + e.what()});
    }
  }
  on_failure(last);
  throw std::logic_error("post_json: on_failure returned");
}

}  // namespace inctrl::http
