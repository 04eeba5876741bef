#pragma once

// JSON configuration shared by the C interface and the command-line tool.

#include <cstdint>
#include <optional>
#include <string>

#include "e3/bench.hpp"
#include "e3/grpo.hpp"
#include "e3/pipeline.hpp"
#include "e3/retrieval.hpp"

namespace e3::capi {

struct Settings {
  pipeline::RewriteConfig rewrite;
  retrieval::PoolConfig pool;
  std::string embedder = "hash-ngram";
  std::string checker;  // endpoint spec, empty when unused
  std::string judge;
  double endpoint_timeout_s = 60;
  std::string eval_log;
  std::optional<std::int64_t> fixed_clock_ms;  // admission timestamps
  grpo::GrpoConfig grpo;
  std::size_t curriculum_window = 200;
  double curriculum_threshold = 0.95;
  double rehearsal_fraction = 0;
  std::uint64_t rehearsal_seed = 20240611;
  bench::BenchConfig bench;
};

// Null or empty text gives defaults. Unknown keys and ill-typed values
// throw Config.
Settings parse_settings(const char* json_text);

}  // namespace e3::capi
