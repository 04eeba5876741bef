#pragma once

// JSON-over-HTTP POST used by every remote adapter (embeddings, judge,
// formal checker, generator). Plain http:// only.

#include <string>

namespace e3::util {

struct HttpResult {
  int status = 0;
  std::string body;
};

// Throws Error(kEndpointTimeout) on timeout and Error(kConnection) when the
// endpoint is unreachable. Non-2xx statuses are returned, not thrown.
HttpResult post_json(const std::string& url, const std::string& body, double timeout_s);

}  // namespace e3::util
