#pragma once

// Execution-aware composite reward: executability, staged equivalence
// verification and cost-based performance gain.

#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "e3/db.hpp"

namespace e3::reward {

struct RewardWeights {
  double lambda_eq = 1.0;
  double lambda_exec = 1.0;
  double lambda_perf = 1.0;

  // Throws Config unless all weights are finite, non-negative and one is > 0.
  void validate() const;

  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

enum class EqResult { kEquivalent, kNotEquivalent };
enum class EqStage { kFormalChecker, kLlmJudge, kExecutionCompare };

std::string_view eq_stage_name(EqStage stage) noexcept;

struct EquivalenceVerdict {
  EqResult result = EqResult::kNotEquivalent;
  EqStage decided_by = EqStage::kFormalChecker;
  std::string detail;

  friend bool operator==(const EquivalenceVerdict&, const EquivalenceVerdict&) = default;
};

// ----------------------------------------------------------------- adapters
//
// Adapters signal "stage unavailable" by throwing Error with code
// Connection, EndpointTimeout or MalformedResponse; the pipeline then moves
// on to the next stage.

enum class CheckerAnswer { kEq, kNeq, kUnknown };

struct CheckerResponse {
  CheckerAnswer answer = CheckerAnswer::kUnknown;
  std::string proof;
};

class FormalChecker {
 public:
  virtual ~FormalChecker() = default;
  virtual CheckerResponse check(std::string_view q, std::string_view q_new,
                                std::string_view schema) = 0;
};

enum class JudgeAnswer { kEq, kNeq, kInconclusive };

class EquivalenceJudge {
 public:
  virtual ~EquivalenceJudge() = default;
  virtual JudgeAnswer judge(std::string_view q, std::string_view q_new,
                            std::string_view schema) = 0;
};

using CheckerFn = std::function<CheckerResponse(std::string_view, std::string_view)>;
using JudgeFn = std::function<JudgeAnswer(std::string_view, std::string_view)>;

std::unique_ptr<FormalChecker> make_scripted_checker(CheckerFn fn);
std::unique_ptr<EquivalenceJudge> make_scripted_judge(JudgeFn fn);

// Endpoint spec: http://... or cmd:<command>. Request body
//   {"original": q, "rewrite": q_new, "schema": descriptor}
// Response {"verdict": "eq"|"neq"|"unknown", "proof": "..."} for the checker,
// {"verdict": "eq"|"neq"|"inconclusive"} for the judge.
std::unique_ptr<FormalChecker> make_endpoint_checker(std::string spec, double timeout_s = 60);
std::unique_ptr<EquivalenceJudge> make_endpoint_judge(std::string spec, double timeout_s = 60);

// Lazily materialized sampled instances for result comparison. One per
// worker; not thread-safe.
class SampledInstances {
 public:
  SampledInstances(const db::Database& source, db::SamplingConfig config = {});

  std::size_t size() const noexcept { return config_.rates.size(); }
  db::Database& instance(std::size_t i);
  double rate(std::size_t i) const { return config_.rates.at(i); }

 private:
  const db::Database& source_;
  db::SamplingConfig config_;
  std::vector<std::unique_ptr<db::Database>> instances_;
};

// Any member may be null; a null stage counts as unavailable.
struct EqContext {
  FormalChecker* checker = nullptr;
  EquivalenceJudge* judge = nullptr;
  SampledInstances* instances = nullptr;
  std::string schema;  // passed to the checker and judge
};

// --------------------------------------------------------------- operations

// 1 iff explain(sql, analyze=false) succeeds for a single read-only
// statement. Empty text, SyntaxRejected and Execution give 0; Connection and
// Timeout propagate.
int exec_reward(std::string_view sql, db::Database& db);

// Stage 1 also short-circuits textual identity (equal AST fingerprints).
// Throws UnresolvedEquivalence when no stage produced an answer.
std::pair<int, EquivalenceVerdict> equivalence_reward(std::string_view q, std::string_view q_new,
                                                      EqContext& ctx);

// max(0, (t_orig - t_new) / t_orig). Throws NonPositiveBaseline.
double perf_reward(double t_orig, double t_new);

// Root "Total Cost" of explain(sql, analyze=false).
double estimated_cost(db::Database& db, std::string_view sql);

struct RewardBreakdown {
  int r_exec = 0;
  int r_eq = 0;
  double r_perf = 0;
  double r_total = 0;
  RewardWeights weights;
  std::optional<EquivalenceVerdict> verdict;
  bool unresolved = false;  // all equivalence stages unavailable; scored as 0
  std::optional<double> t_orig_cost;
  std::optional<double> t_new_cost;
};

// Short-circuits to all zeros when q_new is not executable. The original's
// cost is computed when not supplied.
RewardBreakdown total_reward(std::string_view q, std::string_view q_new, db::Database& db,
                             const RewardWeights& weights, EqContext& ctx,
                             std::optional<double> t_orig_cost = std::nullopt);

// Appends one JSON line per scored candidate. Thread-safe.
class EvalLog {
 public:
  explicit EvalLog(const std::string& path);
  void append(std::string_view query_id, int candidate_index, std::string_view sql,
              const RewardBreakdown& b);

 private:
  std::mutex mu_;
  std::ofstream out_;
  std::string path_;
};

}  // namespace e3::reward
