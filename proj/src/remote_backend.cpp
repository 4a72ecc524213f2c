// The only translation unit that includes cpp-httplib.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <random>
#include <thread>

#include "visforge/error.hpp"
#include "visforge/gateway.hpp"

namespace visforge {

namespace {

struct Failure {
  ErrorCode code;
  std::string message;
  bool retryable;
};

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

RemoteBackend::RemoteBackend(RemoteSpec spec, BackendConfig cfg) : spec_(std::move(spec)), cfg_(std::move(cfg)) {
  const std::string& url = spec_.endpoint;
  const size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::ConfigError, "endpoint must be an absolute URL: " + url);
  const size_t path_start = url.find('/', scheme_end + 3);
  base_url_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string RemoteBackend::complete(const Dialogue& dialogue) {
  const std::string body = build_request(dialogue, spec_.model, cfg_.sampling).dump();
  httplib::Headers headers;
  if (!spec_.auth_env.empty()) {
    if (const char* token = std::getenv(spec_.auth_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }

  thread_local std::mt19937 rng{std::random_device{}()};
  std::uniform_real_distribution<double> jitter(0.5, 1.0);

  Failure last{ErrorCode::TransportError, "no attempt made", true};
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(backoff_delay(cfg_, attempt - 1, jitter(rng)));

    httplib::Client client(base_url_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      const auto elapsed = std::chrono::steady_clock::now() - started;
      const bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                             (res.error() == httplib::Error::Read && elapsed >= cfg_.timeout * 9 / 10);
      last = {timed_out ? ErrorCode::Timeout : ErrorCode::TransportError,
              spec_.endpoint + ": " + httplib::to_string(res.error()), true};
      continue;
    }
    if (res->status == 200) return parse_completion(res->body);
    last = {ErrorCode::TransportError, spec_.endpoint + ": HTTP " + std::to_string(res->status),
            retryable_status(res->status)};
    if (!last.retryable) break;
  }
  throw Error(last.code, last.message + " (after " + std::to_string(cfg_.max_retries) + " retries)");
}

}  // namespace visforge
