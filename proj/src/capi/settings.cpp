#include "capi/settings.hpp"

#include <initializer_list>
#include <string_view>

#include "e3/error.hpp"
#include "json.hpp"

namespace e3::capi {

using nlohmann::json;

namespace {

void only_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) fail(ErrorCode::kConfig, std::string(where) + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    bool known = false;
    for (auto key : keys) known = known || key == k;
    if (!known) fail(ErrorCode::kConfig, "unknown setting " + std::string(where) + "." + k);
  }
}

template <class T>
void get(const json& obj, const char* key, T& into) {
  if (obj.contains(key)) into = obj.at(key).get<T>();
}

}  // namespace

Settings parse_settings(const char* json_text) {
  Settings s;
  if (!json_text || !*json_text) return s;
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, std::string("configuration is not JSON: ") + e.what());
  }
  only_keys(root, "config",
            {"k", "confirm_latency", "latency_runs", "workers", "generator", "prompt", "weights",
             "thresholds", "sampling", "pool", "embedder", "checker", "judge", "endpoint_timeout_s",
             "eval_log", "fixed_clock_ms", "grpo", "curriculum", "bench"});
  try {
    auto& rw = s.rewrite;
    get(root, "k", rw.k);
    get(root, "confirm_latency", rw.confirm_latency);
    get(root, "latency_runs", rw.latency_runs);
    get(root, "workers", rw.workers);
    get(root, "embedder", s.embedder);
    get(root, "checker", s.checker);
    get(root, "judge", s.judge);
    get(root, "endpoint_timeout_s", s.endpoint_timeout_s);
    get(root, "eval_log", s.eval_log);
    if (root.contains("fixed_clock_ms")) s.fixed_clock_ms = root["fixed_clock_ms"].get<std::int64_t>();

    if (root.contains("generator")) {
      const auto& g = root["generator"];
      only_keys(g, "generator", {"endpoint", "n", "temperature", "max_tokens", "timeout_s", "retries"});
      get(g, "endpoint", rw.generator.endpoint);
      get(g, "n", rw.generator.samples_n);
      get(g, "temperature", rw.generator.temperature);
      get(g, "max_tokens", rw.generator.max_output_tokens);
      get(g, "timeout_s", rw.generator.timeout_s);
      get(g, "retries", rw.generator.retries);
    }
    if (root.contains("prompt")) {
      const auto& p = root["prompt"];
      only_keys(p, "prompt", {"instruction_header", "token_budget"});
      get(p, "instruction_header", rw.prompt.instruction_header);
      get(p, "token_budget", rw.prompt.token_budget);
    }
    if (root.contains("weights")) {
      const auto& w = root["weights"];
      only_keys(w, "weights", {"lambda_eq", "lambda_exec", "lambda_perf"});
      get(w, "lambda_eq", rw.weights.lambda_eq);
      get(w, "lambda_exec", rw.weights.lambda_exec);
      get(w, "lambda_perf", rw.weights.lambda_perf);
    }
    if (root.contains("thresholds")) {
      const auto& t = root["thresholds"];
      only_keys(t, "thresholds", {"filter_ratio", "seq_scan_rows", "join_rows", "nested_loop_inner_rows"});
      get(t, "filter_ratio", rw.thresholds.filter_ratio);
      get(t, "seq_scan_rows", rw.thresholds.seq_scan_rows);
      get(t, "join_rows", rw.thresholds.join_rows);
      get(t, "nested_loop_inner_rows", rw.thresholds.nested_loop_inner_rows);
    }
    if (root.contains("sampling")) {
      const auto& sm = root["sampling"];
      only_keys(sm, "sampling", {"rates", "seed"});
      get(sm, "rates", rw.sampling.rates);
      get(sm, "seed", rw.sampling.seed);
    }
    if (root.contains("pool")) {
      const auto& p = root["pool"];
      only_keys(p, "pool", {"alpha", "admit_speedup", "capacity", "strip_literals"});
      get(p, "alpha", s.pool.alpha);
      get(p, "admit_speedup", s.pool.admit_speedup);
      if (p.contains("capacity")) s.pool.capacity = p["capacity"].get<std::size_t>();
      get(p, "strip_literals", s.pool.tree_options.strip_literals);
    }
    if (root.contains("grpo")) {
      const auto& g = root["grpo"];
      only_keys(g, "grpo", {"epsilon", "beta", "std_floor", "group_size"});
      get(g, "epsilon", s.grpo.epsilon);
      get(g, "beta", s.grpo.beta);
      get(g, "std_floor", s.grpo.std_floor);
      get(g, "group_size", s.grpo.group_size);
    }
    if (root.contains("curriculum")) {
      const auto& c = root["curriculum"];
      only_keys(c, "curriculum", {"window", "threshold", "rehearsal_fraction", "seed"});
      get(c, "window", s.curriculum_window);
      get(c, "threshold", s.curriculum_threshold);
      get(c, "rehearsal_fraction", s.rehearsal_fraction);
      get(c, "seed", s.rehearsal_seed);
    }
    if (root.contains("bench")) {
      const auto& b = root["bench"];
      only_keys(b, "bench", {"label", "runs", "improve_ratio", "check_equivalence"});
      get(b, "label", s.bench.system_label);
      get(b, "runs", s.bench.runs);
      get(b, "improve_ratio", s.bench.improve_ratio);
      get(b, "check_equivalence", s.bench.check_equivalence);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("bad setting: ") + e.what());
  }

  if (s.rewrite.k < 0) fail(ErrorCode::kConfig, "k must be >= 0");
  if (s.rewrite.workers < 1) fail(ErrorCode::kConfig, "workers must be >= 1");
  if (s.rewrite.latency_runs < 3) fail(ErrorCode::kConfig, "latency_runs must be >= 3");
  if (s.rewrite.generator.samples_n < 1) fail(ErrorCode::kConfig, "generator.n must be >= 1");
  if (!(s.pool.alpha >= 0 && s.pool.alpha <= 1)) fail(ErrorCode::kConfig, "pool.alpha must be in [0,1]");
  if (!(s.pool.admit_speedup > 0)) fail(ErrorCode::kConfig, "pool.admit_speedup must be > 0");
  if (s.bench.runs < 3) fail(ErrorCode::kConfig, "bench.runs must be >= 3");
  if (!(s.bench.improve_ratio > 0 && s.bench.improve_ratio <= 1)) {
    fail(ErrorCode::kConfig, "bench.improve_ratio must be in (0,1]");
  }
  if (s.curriculum_window == 0) fail(ErrorCode::kConfig, "curriculum.window must be > 0");
  if (!(s.curriculum_threshold > 0 && s.curriculum_threshold <= 1)) {
    fail(ErrorCode::kConfig, "curriculum.threshold must be in (0,1]");
  }
  if (!(s.rehearsal_fraction >= 0 && s.rehearsal_fraction < 1)) {
    fail(ErrorCode::kConfig, "curriculum.rehearsal_fraction must be in [0,1)");
  }
  s.rewrite.weights.validate();
  s.grpo.validate();
  return s;
}

}  // namespace e3::capi
