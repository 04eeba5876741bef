#include "e3/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <thread>

#include "e3/error.hpp"
#include "e3/sql_ast.hpp"
#include "json.hpp"
#include "util/endpoint.hpp"

namespace e3::pipeline {

using nlohmann::json;

const char* const kDefaultInstruction =
    "You are a SQL optimization assistant. Rewrite the target query into a semantically "
    "equivalent query that executes faster on the same database. Preserve the result set "
    "exactly, including duplicates and ordering where the query specifies one. Use the "
    "execution hint to locate bottlenecks. Answer with one SQL statement in a ```sql block.";

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto nl = s.find('\n', start);
    out.push_back(s.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

std::string render_prompt(std::string_view header, std::string_view q,
                          const std::vector<const retrieval::ScoredDemo*>& demos,
                          const std::vector<std::string_view>& hint_lines) {
  std::string out(trim(header));
  out += "\n\n";
  for (const auto* d : demos) {
    out += "-- Example original\n";
    out += trim(d->demo.original_sql);
    out += "\n-- Example rewrite\n";
    out += trim(d->demo.rewritten_sql);
    out += "\n\n";
  }
  out += "-- Execution hint\n";
  for (const auto& l : hint_lines) {
    out += l;
    out += '\n';
  }
  out += "\n-- Target query\n";
  out += trim(q);
  out += '\n';
  return out;
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool keyword_at(std::string_view s, std::size_t i, std::string_view kw) {
  if (i + kw.size() > s.size()) return false;
  for (std::size_t k = 0; k < kw.size(); ++k) {
    if (std::toupper(static_cast<unsigned char>(s[i + k])) != kw[k]) return false;
  }
  if (i > 0 && is_ident_char(s[i - 1])) return false;
  if (i + kw.size() < s.size() && is_ident_char(s[i + kw.size()])) return false;
  return true;
}

std::size_t skip_ws(std::string_view s, std::size_t i) {
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return i;
}

// WITH [RECURSIVE] name [(cols)] AS (
bool cte_header_at(std::string_view s, std::size_t i) {
  i = skip_ws(s, i + 4);
  if (keyword_at(s, i, "RECURSIVE")) i = skip_ws(s, i + 9);
  const auto name = i;
  while (i < s.size() && is_ident_char(s[i])) ++i;
  if (i == name) return false;
  i = skip_ws(s, i);
  if (i < s.size() && s[i] == '(') {
    const auto close = s.find(')', i);
    if (close == std::string_view::npos) return false;
    i = skip_ws(s, close + 1);
  }
  if (!keyword_at(s, i, "AS")) return false;
  i = skip_ws(s, i + 2);
  return i < s.size() && s[i] == '(';
}

// Cuts at the first ';' outside quotes, or at a blank line.
std::string_view first_statement(std::string_view s) {
  char quote = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (quote) {
      if (c == quote) quote = 0;
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
    } else if (c == ';') {
      return s.substr(0, i);
    } else if (c == '\n') {
      auto j = i + 1;
      while (j < s.size() && (s[j] == ' ' || s[j] == '\t' || s[j] == '\r')) ++j;
      if (j < s.size() && s[j] == '\n') return s.substr(0, i);
    }
  }
  return s;
}

class ScriptedGenerator final : public Generator {
 public:
  explicit ScriptedGenerator(ScriptFn fn) : fn_(std::move(fn)) {}
  std::vector<Completion> complete(const std::string& prompt, int n, const GeneratorConfig&) override {
    return fn_(prompt, n);
  }

 private:
  ScriptFn fn_;
};

std::vector<double> number_list(const json& j, const char* what) {
  std::vector<double> out;
  if (j.is_null()) return out;
  if (!j.is_array()) fail(ErrorCode::kMalformedResponse, std::string(what) + " must be an array");
  for (const auto& x : j) {
    if (!x.is_number()) fail(ErrorCode::kMalformedResponse, std::string(what) + " must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

class EndpointGenerator final : public Generator {
 public:
  std::vector<Completion> complete(const std::string& prompt, int n, const GeneratorConfig& cfg) override {
    const json req{{"prompt", prompt},
                   {"n", n},
                   {"temperature", cfg.temperature},
                   {"max_tokens", cfg.max_output_tokens}};
    const json body = util::call_endpoint(cfg.endpoint, req, cfg.timeout_s);
    std::vector<Completion> out;
    const json* items = nullptr;
    if (body.is_object() && body.contains("completions")) items = &body["completions"];
    if (body.is_object() && body.contains("choices")) items = &body["choices"];
    if (!items || !items->is_array()) fail(ErrorCode::kMalformedResponse, "generator response lacks completions");
    for (const auto& item : *items) {
      Completion c;
      if (item.is_string()) {
        c.text = item.get<std::string>();
      } else if (item.is_object() && item.contains("text") && item["text"].is_string()) {
        c.text = item["text"].get<std::string>();
        c.logprobs = number_list(item.value("logprobs", json()), "logprobs");
        c.ref_logprobs = number_list(item.value("ref_logprobs", json()), "ref_logprobs");
      } else {
        fail(ErrorCode::kMalformedResponse, "completion items must be strings or {text}");
      }
      out.push_back(std::move(c));
    }
    return out;
  }
};

bool retryable(const Error& e) {
  return e.code() == ErrorCode::kEndpointTimeout || e.code() == ErrorCode::kMalformedResponse ||
         e.code() == ErrorCode::kConnection;
}

}  // namespace

std::size_t estimate_tokens(std::string_view text) noexcept { return (text.size() + 3) / 4; }

Prompt assemble_prompt(std::string_view q, const plan::ExecutionHint& hint,
                       const std::vector<retrieval::ScoredDemo>& demos, const PromptConfig& cfg) {
  std::vector<const retrieval::ScoredDemo*> kept;
  for (const auto& d : demos) kept.push_back(&d);
  auto lines = split_lines(trim(hint.hint_text));
  Prompt p;
  const std::size_t total_lines = lines.size();
  while (true) {
    p.text = render_prompt(cfg.instruction_header, q, kept, lines);
    if (estimate_tokens(p.text) <= cfg.token_budget) break;
    if (!kept.empty()) {
      // lowest score goes first; among equals, the later one
      auto victim = kept.begin();
      for (auto it = kept.begin(); it != kept.end(); ++it) {
        if ((*it)->score <= (*victim)->score) victim = it;
      }
      kept.erase(victim);
    } else if (!lines.empty()) {
      lines.pop_back();
    } else {
      fail(ErrorCode::kPromptTooLong, "prompt needs " + std::to_string(estimate_tokens(p.text)) +
                                          " tokens, budget is " + std::to_string(cfg.token_budget));
    }
  }
  p.demos_used = kept.size();
  p.hint_lines_dropped = total_lines - lines.size();
  return p;
}

std::unique_ptr<Generator> make_scripted_generator(ScriptFn fn) {
  return std::make_unique<ScriptedGenerator>(std::move(fn));
}

std::unique_ptr<Generator> make_endpoint_generator() { return std::make_unique<EndpointGenerator>(); }

std::string extract_sql(std::string_view text) {
  for (std::size_t pos = text.find("```"); pos != std::string_view::npos;) {
    auto body_start = text.find('\n', pos + 3);
    if (body_start == std::string_view::npos) break;
    ++body_start;
    const auto close = text.find("```", body_start);
    const auto body = text.substr(body_start, close == std::string_view::npos ? std::string_view::npos
                                                                               : close - body_start);
    const auto stmt = trim(first_statement(trim(body)));
    if (!stmt.empty()) return std::string(stmt);
    if (close == std::string_view::npos) break;
    pos = text.find("```", close + 3);
  }
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (keyword_at(text, i, "SELECT") || (keyword_at(text, i, "WITH") && cte_header_at(text, i))) {
      return std::string(trim(first_statement(text.substr(i))));
    }
  }
  return {};
}

std::vector<Candidate> generate_candidates(Generator& gen, const std::string& prompt,
                                           const GeneratorConfig& cfg) {
  if (cfg.samples_n < 1) fail(ErrorCode::kConfig, "samples_n must be at least 1");
  const auto n = static_cast<std::size_t>(cfg.samples_n);
  std::vector<Candidate> out;
  std::exception_ptr last;
  for (int attempt = 0; attempt <= std::max(0, cfg.retries) && out.size() < n; ++attempt) {
    try {
      auto got = gen.complete(prompt, static_cast<int>(n - out.size()), cfg);
      for (auto& c : got) {
        if (out.size() == n) break;
        std::string sql = extract_sql(c.text);
        out.push_back({std::move(sql), std::move(c)});
      }
    } catch (const Error& e) {
      if (!retryable(e)) throw;
      last = std::current_exception();
    }
  }
  if (out.size() < n && out.size() < 2) {
    if (last) std::rethrow_exception(last);
    fail(ErrorCode::kMalformedResponse, "generator returned " + std::to_string(out.size()) + " of " +
                                            std::to_string(n) + " completions");
  }
  return out;
}

std::vector<reward::RewardBreakdown> score_candidates(std::string_view q,
                                                      const std::vector<Candidate>& candidates,
                                                      RewriteContext& ctx, const RewriteConfig& cfg,
                                                      const reward::RewardWeights& weights) {
  if (!ctx.db) fail(ErrorCode::kInvalidArgument, "rewrite context lacks a database");
  const double t_orig = reward::estimated_cost(*ctx.db, q);
  std::string schema;
  if (ctx.checker || ctx.judge) schema = ctx.db->schema_descriptor();

  std::vector<reward::RewardBreakdown> out(candidates.size());
  const auto score_range = [&](db::Database& db, reward::SampledInstances& inst, std::size_t i) {
    reward::EqContext eq{ctx.checker, ctx.judge, &inst, schema};
    out[i] = reward::total_reward(q, candidates[i].sql, db, weights, eq, t_orig);
  };

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, cfg.workers)), candidates.size());
  if (workers <= 1) {
    reward::SampledInstances inst(*ctx.db, cfg.sampling);
    for (std::size_t i = 0; i < candidates.size(); ++i) score_range(*ctx.db, inst, i);
  } else {
    std::vector<std::unique_ptr<db::Database>> sessions;
    for (std::size_t w = 0; w < workers; ++w) sessions.push_back(ctx.db->clone());
    std::vector<std::exception_ptr> errors(candidates.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        reward::SampledInstances inst(*sessions[w], cfg.sampling);
        for (std::size_t i = next++; i < candidates.size(); i = next++) {
          try {
            score_range(*sessions[w], inst, i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : threads) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  if (ctx.log) {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      ctx.log->append(ctx.query_id, static_cast<int>(i), candidates[i].sql, out[i]);
    }
  }
  return out;
}

std::optional<int> select_candidate(const std::vector<reward::RewardBreakdown>& breakdowns) {
  std::optional<int> best;
  for (std::size_t i = 0; i < breakdowns.size(); ++i) {
    const auto& b = breakdowns[i];
    if (b.r_exec != 1 || b.r_eq != 1 || !b.t_new_cost) continue;
    if (!best || *b.t_new_cost < *breakdowns[*best].t_new_cost) best = static_cast<int>(i);
  }
  return best;
}

namespace {

std::string build_prompt(std::string_view q, RewriteContext& ctx, const RewriteConfig& cfg) {
  if (!ctx.db || !ctx.pool || !ctx.embedder || !ctx.generator) {
    fail(ErrorCode::kInvalidArgument, "rewrite context is incomplete");
  }
  const auto hint = plan::build_hint(plan::parse_plan(ctx.db->explain(q, false)), cfg.thresholds);
  std::vector<retrieval::ScoredDemo> demos;
  if (ctx.pool->size() > 0 && cfg.k > 0) {
    const auto query = retrieval::make_query(q, *ctx.embedder);
    demos = retrieval::retrieve_top_k(query, *ctx.pool, cfg.k);
  }
  return assemble_prompt(q, hint, demos, cfg.prompt).text;
}

}  // namespace

RewriteOutcome rewrite(std::string_view q, RewriteContext& ctx, const RewriteConfig& cfg) {
  sql::parse_sql(q);
  RewriteOutcome out;
  out.chosen_sql = std::string(q);
  out.prompt = build_prompt(q, ctx, cfg);
  out.candidates = generate_candidates(*ctx.generator, out.prompt, cfg.generator);
  out.breakdowns = score_candidates(q, out.candidates, ctx, cfg, cfg.weights);
  out.chosen_index = select_candidate(out.breakdowns);
  if (!out.chosen_index) return out;

  const auto& chosen = out.breakdowns[*out.chosen_index];
  out.used_original = false;
  out.chosen_sql = out.candidates[*out.chosen_index].sql;

  double t_orig = *chosen.t_orig_cost, t_new = *chosen.t_new_cost;
  if (cfg.confirm_latency) {
    t_orig = db::measure_latency(*ctx.db, q, cfg.latency_runs).trimmed_mean_s;
    t_new = db::measure_latency(*ctx.db, out.chosen_sql, cfg.latency_runs).trimmed_mean_s;
  }
  if (t_orig > 0 && t_new > 0) {
    out.admission_speedup = t_orig / t_new;
    const auto clock = ctx.clock ? ctx.clock : retrieval::system_clock_ms();
    out.pool_admitted =
        retrieval::maybe_admit(*ctx.pool, q, out.chosen_sql, t_orig, t_new, true, *ctx.embedder, clock);
  }
  return out;
}

CollectedGroup collect_group(std::string_view q, RewriteContext& ctx, const RewriteConfig& cfg,
                             const grpo::CurriculumStage& stage) {
  stage.validate();
  sql::parse_sql(q);
  CollectedGroup out;
  out.prompt = build_prompt(q, ctx, cfg);
  const auto candidates = generate_candidates(*ctx.generator, out.prompt, cfg.generator);
  out.breakdowns = score_candidates(q, candidates, ctx, cfg, grpo::stage_weights(stage));
  out.group.query_id = ctx.query_id;
  out.group.prompt_fingerprint = sql::to_hex16(sql::fnv1a64(out.prompt));
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& raw = candidates[i].raw;
    if (raw.logprobs.empty()) fail(ErrorCode::kMalformedResponse, "completion lacks token logprobs");
    grpo::CandidateTrace t;
    t.sql = candidates[i].sql;
    t.reward = out.breakdowns[i].r_total;
    t.logp_current = raw.logprobs;
    t.logp_old = raw.logprobs;
    t.logp_ref = raw.ref_logprobs.empty() ? raw.logprobs : raw.ref_logprobs;
    out.group.candidates.push_back(std::move(t));
  }
  grpo::validate_group(out.group);
  return out;
}

}  // namespace e3::pipeline
