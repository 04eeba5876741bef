#pragma once

// Request/response transport shared by the judge, formal-checker and
// generator adapters. An endpoint spec is either an http:// URL (JSON POST)
// or "cmd:<shell command>" (JSON on stdin, JSON on stdout).

#include <string>

#include "json.hpp"

namespace e3::util {

// Throws Connection / EndpointTimeout for transport failures and
// MalformedResponse for non-2xx statuses, non-zero exits or non-JSON bodies.
nlohmann::json call_endpoint(const std::string& spec, const nlohmann::json& request,
                             double timeout_s);

bool is_endpoint_spec(const std::string& spec) noexcept;

}  // namespace e3::util
