#include "http_util.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <thread>

#include "ontonorm/error.hpp"

namespace ontonorm::detail {

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto slash = base_url.find('/', host_start);
  if (slash == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, slash), prefix};
}

namespace {

int retry_after_ms(const httplib::Response& res, int cap) {
  if (!res.has_header("Retry-After")) return -1;
  try {
    double secs = std::stod(res.get_header_value("Retry-After"));
    if (secs < 0) return -1;
    return std::min(cap, static_cast<int>(secs * 1000.0));
  } catch (...) {
    return -1;
  }
}

}  // namespace

HttpReply send_with_retry(const HttpCall& call, const RetryPolicy& policy,
                          std::atomic<std::size_t>* retry_counter) {
  auto [host, prefix] = split_base_url(call.base_url);
  httplib::Headers headers;
  for (const auto& [k, v] : call.headers) headers.emplace(k, v);

  HttpReply reply;
  for (int attempt = 0;; ++attempt) {
    httplib::Client client(host);
    auto tmo = std::chrono::milliseconds(policy.timeout_ms);
    client.set_connection_timeout(tmo);
    client.set_read_timeout(tmo);
    client.set_write_timeout(tmo);

    std::string path = prefix + call.path;
    httplib::Result res = call.body.empty()
                              ? client.Get(path, headers)
                              : client.Post(path, headers, call.body, call.content_type);

    int wait_ms = -1;
    std::string failure;
    if (!res) {
      failure = "request to " + host + path + " failed: " + httplib::to_string(res.error());
    } else {
      int status = res->status;
      if (status >= 200 && status < 300) {
        reply.status = status;
        reply.body = res->body;
        reply.retries = attempt;
        return reply;
      }
      if (status == 401 || status == 403)
        throw AuthError("authentication rejected by " + host + " (HTTP " + std::to_string(status) + ")",
                        status);
      if (status == 429 && !policy.retry_rate_limited)
        throw QuotaError("rate limit or quota exhausted at " + host + " (HTTP 429)", status);
      if (status != 429 && status < 500)
        throw TransportError("HTTP " + std::to_string(status) + " from " + host + path + ": " + res->body,
                             false, status);
      failure = "HTTP " + std::to_string(status) + " from " + host + path;
      reply.status = status;
      wait_ms = retry_after_ms(*res, policy.max_backoff_ms);
    }

    if (attempt >= policy.max_retries)
      throw TransportError(failure + " (gave up after " + std::to_string(attempt) + " retries)", true,
                           reply.status);
    if (wait_ms < 0) {
      long long backoff = static_cast<long long>(policy.backoff_base_ms) << attempt;
      wait_ms = static_cast<int>(std::min<long long>(backoff, policy.max_backoff_ms));
    }
    if (retry_counter) retry_counter->fetch_add(1, std::memory_order_relaxed);
    std::this_thread::sleep_for(std::chrono::milliseconds(wait_ms));
  }
}

}  // namespace ontonorm::detail
