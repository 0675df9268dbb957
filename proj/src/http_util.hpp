#pragma once

#include <atomic>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace ontonorm::detail {

struct RetryPolicy {
  int max_retries = 3;
  int backoff_base_ms = 500;
  int max_backoff_ms = 30000;
  int timeout_ms = 60000;
  // When false, HTTP 429 raises QuotaError immediately.
  bool retry_rate_limited = true;
};

struct HttpCall {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string path;      // appended to the prefix; may carry a query string
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;      // POST when non-empty, GET otherwise
  std::string content_type = "application/json";
};

struct HttpReply {
  int status = 0;
  std::string body;
  int retries = 0;
};

// Issues the call, retrying timeouts, connection failures, 429 and 5xx with
// exponential backoff (Retry-After honored, capped at max_backoff_ms).
// 401/403 raise AuthError; other 4xx raise a non-retryable TransportError;
// exhausting retries raises a retryable TransportError. Every retry bumps
// `retry_counter` when given.
HttpReply send_with_retry(const HttpCall& call, const RetryPolicy& policy,
                          std::atomic<std::size_t>* retry_counter = nullptr);

std::pair<std::string, std::string> split_base_url(const std::string& base_url);

}  // namespace ontonorm::detail
