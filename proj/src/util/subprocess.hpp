#pragma once

#include <string>

namespace e3::util {

struct ProcessResult {
  int exit_code = -1;
  std::string out;
};

// Runs `command` through /bin/sh -c, feeding `input` on stdin and capturing
// stdout. Kills the child and throws Error(kEndpointTimeout) after
// timeout_s.
ProcessResult run_command(const std::string& command, const std::string& input, double timeout_s);

}  // namespace e3::util
