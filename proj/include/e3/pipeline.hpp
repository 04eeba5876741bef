#pragma once

// Inference and collection: plan-aware prompt assembly, candidate sampling,
// scoring, selection and pool feedback.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "e3/db.hpp"
#include "e3/grpo.hpp"
#include "e3/plan_hint.hpp"
#include "e3/retrieval.hpp"
#include "e3/reward.hpp"

namespace e3::pipeline {

// ------------------------------------------------------------------ prompts
//
//   <header>
//
//   -- Example original        (once per demonstration, in the given order)
//   <sql>
//   -- Example rewrite
//   <sql>
//
//   -- Execution hint
//   <hint lines>
//
//   -- Target query
//   <sql>

extern const char* const kDefaultInstruction;

struct PromptConfig {
  std::string instruction_header = kDefaultInstruction;
  std::size_t token_budget = 4096;  // estimated as ceil(bytes / 4)
};

struct Prompt {
  std::string text;
  std::size_t demos_used = 0;
  std::size_t hint_lines_dropped = 0;
};

std::size_t estimate_tokens(std::string_view text) noexcept;

// Over budget: drops the lowest-scored demonstration (later one on ties)
// until none are left, then hint lines from the end. Throws PromptTooLong
// when header and target alone do not fit.
Prompt assemble_prompt(std::string_view q, const plan::ExecutionHint& hint,
                       const std::vector<retrieval::ScoredDemo>& demos,
                       const PromptConfig& cfg = {});

// ---------------------------------------------------------------- generator

struct Completion {
  std::string text;
  std::vector<double> logprobs;      // sampling policy, per token (optional)
  std::vector<double> ref_logprobs;  // reference policy (optional)
};

struct GeneratorConfig {
  std::string endpoint;  // http://... or cmd:<command>
  int samples_n = 8;
  double temperature = 0.7;
  int max_output_tokens = 512;
  double timeout_s = 120;
  int retries = 2;
};

class Generator {
 public:
  virtual ~Generator() = default;
  // May return fewer than n completions.
  virtual std::vector<Completion> complete(const std::string& prompt, int n,
                                           const GeneratorConfig& cfg) = 0;
};

using ScriptFn = std::function<std::vector<Completion>(const std::string& prompt, int n)>;
std::unique_ptr<Generator> make_scripted_generator(ScriptFn fn);

// Request {"prompt","n","temperature","max_tokens"}; response
// {"completions": [...]} whose items are strings or
// {"text", "logprobs"?, "ref_logprobs"?}, or {"choices": [{"text"}...]}.
std::unique_ptr<Generator> make_endpoint_generator();

// First non-empty fenced code block if any, else the span starting at the
// first SELECT keyword or CTE header. Either is cut at a ';' outside quotes
// or at a blank line, then trimmed. Returns "" when nothing qualifies.
std::string extract_sql(std::string_view completion);

struct Candidate {
  std::string sql;  // "" marks an empty candidate
  Completion raw;
};

// Requests the missing samples up to 1 + retries times. Keeps a partial
// group of at least two after the last failure, otherwise rethrows.
std::vector<Candidate> generate_candidates(Generator& gen, const std::string& prompt,
                                           const GeneratorConfig& cfg);

// ------------------------------------------------------------------ rewrite

struct RewriteConfig {
  int k = 3;
  GeneratorConfig generator;
  PromptConfig prompt;
  reward::RewardWeights weights;
  plan::BottleneckThresholds thresholds;
  db::SamplingConfig sampling;
  bool confirm_latency = false;  // admit on measured trimmed means
  int latency_runs = 5;
  int workers = 1;  // concurrent candidate scoring, one session each
};

struct RewriteContext {
  db::Database* db = nullptr;
  retrieval::DemoPool* pool = nullptr;
  retrieval::EmbeddingProvider* embedder = nullptr;
  Generator* generator = nullptr;
  reward::FormalChecker* checker = nullptr;
  reward::EquivalenceJudge* judge = nullptr;
  reward::EvalLog* log = nullptr;
  retrieval::Clock clock;
  std::string query_id = "q";
};

struct RewriteOutcome {
  std::string chosen_sql;
  bool used_original = true;
  std::optional<int> chosen_index;
  std::vector<Candidate> candidates;
  std::vector<reward::RewardBreakdown> breakdowns;
  bool pool_admitted = false;
  std::optional<double> admission_speedup;
  std::string prompt;
};

// Scores every candidate with total_reward. With workers > 1 each worker
// scores on its own clone of ctx.db; checker and judge are then shared and
// must be thread-safe.
std::vector<reward::RewardBreakdown> score_candidates(std::string_view q,
                                                      const std::vector<Candidate>& candidates,
                                                      RewriteContext& ctx,
                                                      const RewriteConfig& cfg,
                                                      const reward::RewardWeights& weights);

// Index of the lowest-cost executable and equivalent candidate (earliest on
// ties), if any.
std::optional<int> select_candidate(const std::vector<reward::RewardBreakdown>& breakdowns);

RewriteOutcome rewrite(std::string_view q, RewriteContext& ctx, const RewriteConfig& cfg);

// Training-mode sampling: one GRPO group scored with the stage's weights.
// Completions must carry logprobs; ref_logprobs default to logprobs and the
// old policy is the sampling policy.
struct CollectedGroup {
  grpo::CandidateGroup group;
  std::vector<reward::RewardBreakdown> breakdowns;
  std::string prompt;
};

CollectedGroup collect_group(std::string_view q, RewriteContext& ctx, const RewriteConfig& cfg,
                             const grpo::CurriculumStage& stage);

}  // namespace e3::pipeline
