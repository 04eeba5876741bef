#pragma once

// Group-relative advantages, the clipped surrogate loss with a KL penalty,
// curriculum staging and training-batch files for an external trainer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "e3/error.hpp"
#include "e3/reward.hpp"

namespace e3::grpo {

struct CandidateTrace {
  std::string sql;
  double reward = 0;
  std::vector<double> logp_current;  // pi_theta, per token
  std::vector<double> logp_old;      // pi_old
  std::vector<double> logp_ref;      // pi_ref

  friend bool operator==(const CandidateTrace&, const CandidateTrace&) = default;
};

struct CandidateGroup {
  std::string query_id;
  std::vector<CandidateTrace> candidates;
  std::string prompt_fingerprint;

  friend bool operator==(const CandidateGroup&, const CandidateGroup&) = default;
};

struct GrpoConfig {
  double epsilon = 0.2;
  double beta = 0.04;
  double std_floor = 1e-8;
  int group_size = 8;

  void validate() const;  // Config

  friend bool operator==(const GrpoConfig&, const GrpoConfig&) = default;
};

// (r_i - mean) / max(population std, std_floor). Throws GroupTooSmall.
std::vector<double> group_advantages(const std::vector<double>& rewards, double std_floor = 1e-8);

// exp(d) - d - 1 with d = logp_ref - logp_current.
double kl_token(double logp_current, double logp_ref) noexcept;

// Mean of kl_token over the trace. Throws LengthMismatch (also for empty
// traces).
double kl_penalty(const std::vector<double>& logp_current, const std::vector<double>& logp_ref);

// Throws GroupTooSmall (< 2 candidates), LengthMismatch (trace lengths
// differ or are empty) or InvalidArgument (a log-probability > 0 or NaN).
void validate_group(const CandidateGroup& group);

//   -(1 / sum_i |o_i|) sum_i sum_t [ min(rho A_i, clip(rho, 1-eps, 1+eps) A_i) - beta kl_it ]
// with rho = exp(logp_current - logp_old) and A from group_advantages.
double grpo_loss(const CandidateGroup& group, const GrpoConfig& cfg);

struct LossGradient {
  double loss = 0;
  // d loss / d logp_current[i][t]; logp_old, logp_ref and advantages are
  // treated as constants.
  std::vector<std::vector<double>> d_logp_current;
};

LossGradient grpo_loss_gradient(const CandidateGroup& group, const GrpoConfig& cfg);

// ---------------------------------------------------------------- curriculum

enum class Stage { kCorrectnessFirst, kOptimizationAware };

std::string_view stage_name(Stage s) noexcept;

struct CurriculumStage {
  Stage stage = Stage::kCorrectnessFirst;
  reward::RewardWeights weights;  // the configured full triple
  double rehearsal_fraction = 0;  // [0,1), non-zero only when optimization-aware

  void validate() const;  // Config
};

// CorrectnessFirst zeroes lambda_perf; OptimizationAware returns the triple.
reward::RewardWeights stage_weights(const CurriculumStage& stage);

// One-way switch to OptimizationAware once at least `threshold` of the last
// `window` groups (window must be full) were correct.
class CurriculumScheduler {
 public:
  explicit CurriculumScheduler(std::size_t window = 200, double threshold = 0.95);

  // Returns true on the call that triggers the transition.
  bool record(bool group_correct);
  Stage stage() const noexcept { return stage_; }
  double window_rate() const noexcept;

 private:
  std::size_t window_;
  double threshold_;
  std::deque<bool> recent_;
  std::size_t correct_ = 0;
  Stage stage_ = Stage::kCorrectnessFirst;
};

// A group counts as correct when every candidate has r_exec * r_eq = 1.
bool group_correct(const std::vector<reward::RewardBreakdown>& breakdowns) noexcept;

namespace detail {
// Uniform in [0, n) from a fully specified engine, independent of the
// standard library's distribution implementation.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}
}  // namespace detail

// Appends ceil(fraction * |stage2_items|) items drawn without replacement
// from stage1_pool (at most the whole pool) at seeded positions. Callers
// vary the seed per epoch. Throws InvalidArgument for fraction outside
// [0,1) and EmptyRehearsalPool when fraction > 0 and the pool is empty.
template <class T>
std::vector<T> mix_rehearsal(const std::vector<T>& stage2_items, const std::vector<T>& stage1_pool,
                             double fraction, std::uint64_t seed) {
  if (!(fraction >= 0 && fraction < 1)) fail(ErrorCode::kInvalidArgument, "rehearsal fraction must be in [0,1)");
  if (fraction == 0) return stage2_items;
  if (stage1_pool.empty()) fail(ErrorCode::kEmptyRehearsalPool, "rehearsal pool is empty");
  std::size_t want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(stage2_items.size()) - 1e-12));
  want = std::min(want, stage1_pool.size());

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(stage1_pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < want; ++i) {
    std::swap(idx[i], idx[i + detail::bounded(rng, idx.size() - i)]);
  }
  std::vector<T> out = stage2_items;
  for (std::size_t i = 0; i < want; ++i) {
    const auto pos = detail::bounded(rng, out.size() + 1);
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), stage1_pool[idx[i]]);
  }
  return out;
}

// ------------------------------------------------------------ batch files

struct TrainingBatch {
  GrpoConfig config;
  std::vector<CandidateGroup> groups;
  std::vector<std::vector<double>> advantages;  // as stored in the file
};

// Header line {"format":"e3-grpo-batch","version":1,"config":{...},"groups":n}
// then one line per group. Validates every group first. Written atomically.
void emit_batch(const std::vector<CandidateGroup>& groups, const GrpoConfig& cfg,
                const std::string& path);

// Throws Schema on format errors, Io when unreadable.
TrainingBatch read_batch(const std::string& path);

}  // namespace e3::grpo
