#include "e3/reward.hpp"

#include <cmath>

#include "e3/error.hpp"
#include "e3/plan_hint.hpp"
#include "e3/sql_ast.hpp"
#include "json.hpp"
#include "util/endpoint.hpp"

namespace e3::reward {

using nlohmann::json;

namespace {

bool is_unavailable(const Error& e) noexcept {
  return e.code() == ErrorCode::kConnection || e.code() == ErrorCode::kEndpointTimeout ||
         e.code() == ErrorCode::kMalformedResponse;
}

std::string verdict_field(const json& body) {
  if (!body.is_object() || !body.contains("verdict") || !body["verdict"].is_string()) {
    fail(ErrorCode::kMalformedResponse, "response lacks a string \"verdict\"");
  }
  return body["verdict"].get<std::string>();
}

json request_body(std::string_view q, std::string_view q_new, std::string_view schema) {
  return json{{"original", q}, {"rewrite", q_new}, {"schema", schema}};
}

class ScriptedChecker final : public FormalChecker {
 public:
  explicit ScriptedChecker(CheckerFn fn) : fn_(std::move(fn)) {}
  CheckerResponse check(std::string_view q, std::string_view q_new, std::string_view) override {
    return fn_(q, q_new);
  }

 private:
  CheckerFn fn_;
};

class ScriptedJudge final : public EquivalenceJudge {
 public:
  explicit ScriptedJudge(JudgeFn fn) : fn_(std::move(fn)) {}
  JudgeAnswer judge(std::string_view q, std::string_view q_new, std::string_view) override {
    return fn_(q, q_new);
  }

 private:
  JudgeFn fn_;
};

class EndpointChecker final : public FormalChecker {
 public:
  EndpointChecker(std::string spec, double timeout) : spec_(std::move(spec)), timeout_(timeout) {}
  CheckerResponse check(std::string_view q, std::string_view q_new,
                        std::string_view schema) override {
    const auto body = util::call_endpoint(spec_, request_body(q, q_new, schema), timeout_);
    const auto v = verdict_field(body);
    CheckerResponse r;
    if (v == "eq") {
      r.answer = CheckerAnswer::kEq;
    } else if (v == "neq") {
      r.answer = CheckerAnswer::kNeq;
    } else if (v == "unknown") {
      r.answer = CheckerAnswer::kUnknown;
    } else {
      fail(ErrorCode::kMalformedResponse, "formal checker verdict: " + v);
    }
    if (body.contains("proof") && body["proof"].is_string()) r.proof = body["proof"];
    return r;
  }

 private:
  std::string spec_;
  double timeout_;
};

class EndpointJudge final : public EquivalenceJudge {
 public:
  EndpointJudge(std::string spec, double timeout) : spec_(std::move(spec)), timeout_(timeout) {}
  JudgeAnswer judge(std::string_view q, std::string_view q_new, std::string_view schema) override {
    const auto v = verdict_field(util::call_endpoint(spec_, request_body(q, q_new, schema), timeout_));
    if (v == "eq") return JudgeAnswer::kEq;
    if (v == "neq") return JudgeAnswer::kNeq;
    if (v == "inconclusive") return JudgeAnswer::kInconclusive;
    fail(ErrorCode::kMalformedResponse, "judge verdict: " + v);
  }

 private:
  std::string spec_;
  double timeout_;
};

std::optional<EquivalenceVerdict> run_checker(std::string_view q, std::string_view q_new,
                                              EqContext& ctx, std::vector<std::string>& notes) {
  try {
    if (sql::fingerprint_sql(q) == sql::fingerprint_sql(q_new)) {
      return EquivalenceVerdict{EqResult::kEquivalent, EqStage::kFormalChecker, "identical AST"};
    }
  } catch (const ParseError&) {
    // the external checker may still understand it
  }
  if (!ctx.checker) {
    notes.push_back("formal checker not configured");
    return std::nullopt;
  }
  try {
    const auto r = ctx.checker->check(q, q_new, ctx.schema);
    if (r.answer == CheckerAnswer::kUnknown) {
      notes.push_back("formal checker: unknown");
      return std::nullopt;
    }
    return EquivalenceVerdict{
        r.answer == CheckerAnswer::kEq ? EqResult::kEquivalent : EqResult::kNotEquivalent,
        EqStage::kFormalChecker, r.proof};
  } catch (const Error& e) {
    if (!is_unavailable(e)) throw;
    notes.push_back(std::string("formal checker unavailable: ") + e.what());
    return std::nullopt;
  }
}

std::optional<EquivalenceVerdict> run_judge(std::string_view q, std::string_view q_new,
                                            EqContext& ctx, std::vector<std::string>& notes) {
  if (!ctx.judge) {
    notes.push_back("judge not configured");
    return std::nullopt;
  }
  try {
    switch (ctx.judge->judge(q, q_new, ctx.schema)) {
      case JudgeAnswer::kEq:
        return EquivalenceVerdict{EqResult::kEquivalent, EqStage::kLlmJudge, "judge: eq"};
      case JudgeAnswer::kNeq:
        return EquivalenceVerdict{EqResult::kNotEquivalent, EqStage::kLlmJudge, "judge: neq"};
      case JudgeAnswer::kInconclusive:
        notes.push_back("judge: inconclusive");
        return std::nullopt;
    }
  } catch (const Error& e) {
    if (!is_unavailable(e)) throw;
    notes.push_back(std::string("judge unavailable: ") + e.what());
  }
  return std::nullopt;
}

std::optional<EquivalenceVerdict> run_execution_compare(std::string_view q, std::string_view q_new,
                                                        EqContext& ctx,
                                                        std::vector<std::string>& notes) {
  if (!ctx.instances || ctx.instances->size() == 0) {
    notes.push_back("no sampled instances");
    return std::nullopt;
  }
  bool ordered = false;
  try {
    ordered = sql::has_order_dependence(sql::parse_sql(q));
  } catch (const ParseError&) {
    ordered = false;
  }
  const auto rate_text = [&](std::size_t i) {
    return "instance " + std::to_string(i) + " (rate " + plan::format_number(ctx.instances->rate(i)) + ")";
  };
  for (std::size_t i = 0; i < ctx.instances->size(); ++i) {
    db::ResultSet a, b;
    try {
      auto& inst = ctx.instances->instance(i);
      a = inst.execute(q);
    } catch (const Error& e) {
      notes.push_back("original failed on " + rate_text(i) + ": " + e.what());
      return std::nullopt;
    }
    try {
      b = ctx.instances->instance(i).execute(q_new);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConnection || e.code() == ErrorCode::kTimeout) {
        notes.push_back("rewrite failed on " + rate_text(i) + ": " + e.what());
        return std::nullopt;
      }
      return EquivalenceVerdict{EqResult::kNotEquivalent, EqStage::kExecutionCompare,
                                "rewrite failed on " + rate_text(i) + ": " + e.what()};
    }
    if (a.truncated || b.truncated) {
      notes.push_back("result truncated on " + rate_text(i));
      return std::nullopt;
    }
    if (!db::compare_results(a, b, ordered)) {
      return EquivalenceVerdict{EqResult::kNotEquivalent, EqStage::kExecutionCompare,
                                std::string("results differ on ") + rate_text(i) +
                                    (ordered ? " (ordered)" : " (bag)")};
    }
  }
  return EquivalenceVerdict{
      EqResult::kEquivalent, EqStage::kExecutionCompare,
      "results match on " + std::to_string(ctx.instances->size()) + " instances" +
          (ordered ? " (ordered)" : " (bag)")};
}

}  // namespace

void RewardWeights::validate() const {
  for (double w : {lambda_eq, lambda_exec, lambda_perf}) {
    if (!std::isfinite(w) || w < 0) fail(ErrorCode::kConfig, "reward weights must be non-negative");
  }
  if (lambda_eq == 0 && lambda_exec == 0 && lambda_perf == 0) {
    fail(ErrorCode::kConfig, "at least one reward weight must be positive");
  }
}

std::string_view eq_stage_name(EqStage stage) noexcept {
  switch (stage) {
    case EqStage::kFormalChecker: return "FormalChecker";
    case EqStage::kLlmJudge: return "LlmJudge";
    case EqStage::kExecutionCompare: return "ExecutionCompare";
  }
  return "?";
}

std::unique_ptr<FormalChecker> make_scripted_checker(CheckerFn fn) {
  return std::make_unique<ScriptedChecker>(std::move(fn));
}
std::unique_ptr<EquivalenceJudge> make_scripted_judge(JudgeFn fn) {
  return std::make_unique<ScriptedJudge>(std::move(fn));
}
std::unique_ptr<FormalChecker> make_endpoint_checker(std::string spec, double timeout_s) {
  if (!util::is_endpoint_spec(spec)) fail(ErrorCode::kConfig, "bad formal checker endpoint: " + spec);
  return std::make_unique<EndpointChecker>(std::move(spec), timeout_s);
}
std::unique_ptr<EquivalenceJudge> make_endpoint_judge(std::string spec, double timeout_s) {
  if (!util::is_endpoint_spec(spec)) fail(ErrorCode::kConfig, "bad judge endpoint: " + spec);
  return std::make_unique<EndpointJudge>(std::move(spec), timeout_s);
}

SampledInstances::SampledInstances(const db::Database& source, db::SamplingConfig config)
    : source_(source), config_(std::move(config)), instances_(config_.rates.size()) {
  for (double r : config_.rates) {
    if (!(r > 0 && r <= 1)) fail(ErrorCode::kConfig, "sampling rates must be in (0,1]");
  }
}

db::Database& SampledInstances::instance(std::size_t i) {
  auto& slot = instances_.at(i);
  if (!slot) slot = source_.sample_instance(config_.rates[i], config_.seed);
  return *slot;
}

int exec_reward(std::string_view sql, db::Database& db) {
  if (sql.find_first_not_of(" \t\r\n") == std::string_view::npos) return 0;
  if (!db::is_select_statement(sql)) return 0;
  try {
    db.explain(sql, false);
    return 1;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kSyntaxRejected || e.code() == ErrorCode::kExecution ||
        e.code() == ErrorCode::kParse) {
      return 0;
    }
    throw;
  }
}

std::pair<int, EquivalenceVerdict> equivalence_reward(std::string_view q, std::string_view q_new,
                                                      EqContext& ctx) {
  std::vector<std::string> notes;
  auto v = run_checker(q, q_new, ctx, notes);
  if (!v) v = run_judge(q, q_new, ctx, notes);
  if (!v) v = run_execution_compare(q, q_new, ctx, notes);
  if (!v) {
    std::string msg = "no equivalence stage produced an answer";
    for (const auto& n : notes) msg += "; " + n;
    fail(ErrorCode::kUnresolvedEquivalence, msg);
  }
  return {v->result == EqResult::kEquivalent ? 1 : 0, std::move(*v)};
}

double perf_reward(double t_orig, double t_new) {
  if (!(t_orig > 0)) fail(ErrorCode::kNonPositiveBaseline, "baseline cost must be positive");
  if (std::isnan(t_new)) fail(ErrorCode::kInvalidArgument, "candidate cost is NaN");
  return std::clamp((t_orig - t_new) / t_orig, 0.0, 1.0);
}

double estimated_cost(db::Database& db, std::string_view sql) {
  return plan::parse_plan(db.explain(sql, false)).est_cost;
}

RewardBreakdown total_reward(std::string_view q, std::string_view q_new, db::Database& db,
                             const RewardWeights& weights, EqContext& ctx,
                             std::optional<double> t_orig_cost) {
  weights.validate();
  RewardBreakdown b;
  b.weights = weights;
  b.r_exec = exec_reward(q_new, db);
  if (b.r_exec == 1) {
    try {
      auto [r, verdict] = equivalence_reward(q, q_new, ctx);
      b.r_eq = r;
      b.verdict = std::move(verdict);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUnresolvedEquivalence) throw;
      b.unresolved = true;
    }
    b.t_orig_cost = t_orig_cost ? *t_orig_cost : estimated_cost(db, q);
    b.t_new_cost = estimated_cost(db, q_new);
    b.r_perf = perf_reward(*b.t_orig_cost, *b.t_new_cost);
  }
  b.r_total = weights.lambda_eq * b.r_eq + weights.lambda_exec * b.r_exec +
              weights.lambda_perf * b.r_perf;
  return b;
}

EvalLog::EvalLog(const std::string& path) : out_(path, std::ios::app), path_(path) {
  if (!out_) fail(ErrorCode::kIo, "cannot open evaluation log " + path);
}

void EvalLog::append(std::string_view query_id, int candidate_index, std::string_view sql,
                     const RewardBreakdown& b) {
  json rec{{"query_id", query_id},
           {"candidate", candidate_index},
           {"sql", sql},
           {"r_exec", b.r_exec},
           {"r_eq", b.r_eq},
           {"r_perf", b.r_perf},
           {"r_total", b.r_total},
           {"weights", {b.weights.lambda_eq, b.weights.lambda_exec, b.weights.lambda_perf}},
           {"unresolved", b.unresolved},
           {"t_orig_cost", b.t_orig_cost ? json(*b.t_orig_cost) : json()},
           {"t_new_cost", b.t_new_cost ? json(*b.t_new_cost) : json()}};
  if (b.verdict) {
    rec["decided_by"] = eq_stage_name(b.verdict->decided_by);
    rec["detail"] = b.verdict->detail;
  } else {
    rec["decided_by"] = nullptr;
  }
  std::lock_guard lock(mu_);
  out_ << rec.dump() << '\n';
  out_.flush();
  if (!out_) fail(ErrorCode::kIo, "write failed on " + path_);
}

}  // namespace e3::reward
