#include "util/http.hpp"

#include <cmath>

#include "e3/error.hpp"
#include "httplib.h"

namespace e3::util {

HttpResult post_json(const std::string& url, const std::string& body, double timeout_s) {
  if (!url.starts_with("http://")) {
    fail(ErrorCode::kConfig, "only http:// endpoints are supported: " + url);
  }
  const auto path_start = url.find('/', 7);
  const std::string origin = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client client(origin);
  const auto sec = static_cast<time_t>(timeout_s);
  const auto usec = static_cast<time_t>(std::llround((timeout_s - static_cast<double>(sec)) * 1e6));
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  auto res = client.Post(path, body, "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write ||
        err == httplib::Error::ConnectionTimeout) {
      fail(ErrorCode::kEndpointTimeout, "request to " + url + " timed out");
    }
    fail(ErrorCode::kConnection, "request to " + url + " failed: " + httplib::to_string(err));
  }
  return {res->status, res->body};
}

}  // namespace e3::util
