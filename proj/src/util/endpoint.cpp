#include "util/endpoint.hpp"

#include "e3/error.hpp"
#include "util/http.hpp"
#include "util/subprocess.hpp"

namespace e3::util {

bool is_endpoint_spec(const std::string& spec) noexcept {
  return spec.starts_with("http://") || (spec.starts_with("cmd:") && spec.size() > 4);
}

nlohmann::json call_endpoint(const std::string& spec, const nlohmann::json& request,
                             double timeout_s) {
  std::string body;
  if (spec.starts_with("http://")) {
    auto res = post_json(spec, request.dump(), timeout_s);
    if (res.status < 200 || res.status >= 300) {
      fail(ErrorCode::kMalformedResponse, spec + ": HTTP status " + std::to_string(res.status));
    }
    body = std::move(res.body);
  } else if (spec.starts_with("cmd:")) {
    auto res = run_command(spec.substr(4), request.dump() + "\n", timeout_s);
    if (res.exit_code != 0) {
      fail(ErrorCode::kMalformedResponse, spec + ": exit status " + std::to_string(res.exit_code));
    }
    body = std::move(res.out);
  } else {
    fail(ErrorCode::kConfig, "unsupported endpoint: " + spec);
  }
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kMalformedResponse, spec + ": response is not JSON");
  }
}

}  // namespace e3::util
