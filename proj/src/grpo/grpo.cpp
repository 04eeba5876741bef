#include "e3/grpo.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace e3::grpo {

using nlohmann::json;

namespace {

constexpr const char* kBatchFormat = "e3-grpo-batch";
constexpr int kBatchVersion = 1;

double clip(double x, double lo, double hi) noexcept { return std::min(std::max(x, lo), hi); }

// Token-level objective term and its derivative with respect to logp_current.
struct TokenTerm {
  double value;
  double d_current;
};

TokenTerm token_term(double cur, double old, double ref, double adv, const GrpoConfig& cfg) {
  const double rho = std::exp(cur - old);
  const double lo = 1 - cfg.epsilon, hi = 1 + cfg.epsilon;
  const double unclipped = rho * adv;
  const double clipped = clip(rho, lo, hi) * adv;
  double surrogate, d_surrogate;
  if (unclipped <= clipped) {
    surrogate = unclipped;
    d_surrogate = unclipped;  // d(rho)/d(cur) = rho
  } else {
    surrogate = clipped;
    d_surrogate = (rho > lo && rho < hi) ? unclipped : 0.0;
  }
  const double d = ref - cur;
  const double kl = std::expm1(d) - d;
  const double d_kl = 1.0 - std::exp(d);
  return {surrogate - cfg.beta * kl, d_surrogate - cfg.beta * d_kl};
}

json group_to_json(const CandidateGroup& g, const std::vector<double>& adv) {
  json cands = json::array();
  for (std::size_t i = 0; i < g.candidates.size(); ++i) {
    const auto& c = g.candidates[i];
    cands.push_back({{"sql", c.sql},
                     {"reward", c.reward},
                     {"advantage", adv[i]},
                     {"logp_current", c.logp_current},
                     {"logp_old", c.logp_old},
                     {"logp_ref", c.logp_ref}});
  }
  return {{"query_id", g.query_id}, {"prompt_fingerprint", g.prompt_fingerprint}, {"candidates", cands}};
}

std::vector<double> double_list(const json& j) {
  if (!j.is_array()) fail(ErrorCode::kSchema, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : j) {
    if (!x.is_number()) fail(ErrorCode::kSchema, "expected an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace

void GrpoConfig::validate() const {
  if (!(epsilon > 0) || !std::isfinite(epsilon)) fail(ErrorCode::kConfig, "epsilon must be > 0");
  if (!(beta >= 0) || !std::isfinite(beta)) fail(ErrorCode::kConfig, "beta must be >= 0");
  if (!(std_floor > 0)) fail(ErrorCode::kConfig, "std_floor must be > 0");
  if (group_size < 2) fail(ErrorCode::kConfig, "group size must be at least 2");
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double std_floor) {
  if (rewards.size() < 2) fail(ErrorCode::kGroupTooSmall, "advantages need at least 2 rewards");
  if (!(std_floor > 0)) fail(ErrorCode::kInvalidArgument, "std_floor must be > 0");
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  if (*lo == *hi) return std::vector<double>(rewards.size(), 0.0);  // mean carries rounding error
  const double n = static_cast<double>(rewards.size());
  double mean = 0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::max(std::sqrt(var / n), std_floor);
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / sd);
  return out;
}

double kl_token(double logp_current, double logp_ref) noexcept {
  const double d = logp_ref - logp_current;
  return std::expm1(d) - d;
}

double kl_penalty(const std::vector<double>& logp_current, const std::vector<double>& logp_ref) {
  if (logp_current.size() != logp_ref.size() || logp_current.empty()) {
    fail(ErrorCode::kLengthMismatch, "KL needs two non-empty traces of equal length");
  }
  double s = 0;
  for (std::size_t t = 0; t < logp_current.size(); ++t) s += kl_token(logp_current[t], logp_ref[t]);
  return s / static_cast<double>(logp_current.size());
}

void validate_group(const CandidateGroup& group) {
  if (group.candidates.size() < 2) fail(ErrorCode::kGroupTooSmall, "group " + group.query_id + " has fewer than 2 candidates");
  for (const auto& c : group.candidates) {
    const auto n = c.logp_current.size();
    if (n == 0 || c.logp_old.size() != n || c.logp_ref.size() != n) {
      fail(ErrorCode::kLengthMismatch, "log-probability traces must share one non-zero length");
    }
    for (const auto* v : {&c.logp_current, &c.logp_old, &c.logp_ref}) {
      for (double x : *v) {
        if (!(x <= 0)) fail(ErrorCode::kInvalidArgument, "log-probabilities must be <= 0");
      }
    }
    if (!std::isfinite(c.reward)) fail(ErrorCode::kInvalidArgument, "reward must be finite");
  }
}

LossGradient grpo_loss_gradient(const CandidateGroup& group, const GrpoConfig& cfg) {
  cfg.validate();
  validate_group(group);
  std::vector<double> rewards;
  std::size_t total_tokens = 0;
  for (const auto& c : group.candidates) {
    rewards.push_back(c.reward);
    total_tokens += c.logp_current.size();
  }
  const auto adv = group_advantages(rewards, cfg.std_floor);
  const double scale = -1.0 / static_cast<double>(total_tokens);

  LossGradient out;
  double sum = 0;
  for (std::size_t i = 0; i < group.candidates.size(); ++i) {
    const auto& c = group.candidates[i];
    auto& grad = out.d_logp_current.emplace_back(c.logp_current.size());
    for (std::size_t t = 0; t < c.logp_current.size(); ++t) {
      const auto term = token_term(c.logp_current[t], c.logp_old[t], c.logp_ref[t], adv[i], cfg);
      sum += term.value;
      grad[t] = scale * term.d_current;
    }
  }
  out.loss = scale * sum;
  return out;
}

double grpo_loss(const CandidateGroup& group, const GrpoConfig& cfg) {
  return grpo_loss_gradient(group, cfg).loss;
}

std::string_view stage_name(Stage s) noexcept {
  return s == Stage::kCorrectnessFirst ? "CorrectnessFirst" : "OptimizationAware";
}

void CurriculumStage::validate() const {
  if (!(rehearsal_fraction >= 0 && rehearsal_fraction < 1)) {
    fail(ErrorCode::kConfig, "rehearsal fraction must be in [0,1)");
  }
  if (stage == Stage::kCorrectnessFirst && rehearsal_fraction > 0) {
    fail(ErrorCode::kConfig, "rehearsal applies only to the optimization-aware stage");
  }
  weights.validate();
  stage_weights(*this).validate();
}

reward::RewardWeights stage_weights(const CurriculumStage& stage) {
  auto w = stage.weights;
  if (stage.stage == Stage::kCorrectnessFirst) w.lambda_perf = 0;
  return w;
}

CurriculumScheduler::CurriculumScheduler(std::size_t window, double threshold)
    : window_(window), threshold_(threshold) {
  if (window == 0) fail(ErrorCode::kConfig, "curriculum window must be positive");
  if (!(threshold > 0 && threshold <= 1)) fail(ErrorCode::kConfig, "curriculum threshold must be in (0,1]");
}

bool CurriculumScheduler::record(bool ok) {
  recent_.push_back(ok);
  correct_ += ok ? 1 : 0;
  if (recent_.size() > window_) {
    correct_ -= recent_.front() ? 1 : 0;
    recent_.pop_front();
  }
  if (stage_ == Stage::kCorrectnessFirst && recent_.size() == window_ &&
      static_cast<double>(correct_) >= threshold_ * static_cast<double>(window_) - 1e-9) {
    stage_ = Stage::kOptimizationAware;
    return true;
  }
  return false;
}

double CurriculumScheduler::window_rate() const noexcept {
  return recent_.empty() ? 0.0 : static_cast<double>(correct_) / static_cast<double>(recent_.size());
}

bool group_correct(const std::vector<reward::RewardBreakdown>& breakdowns) noexcept {
  if (breakdowns.empty()) return false;
  for (const auto& b : breakdowns) {
    if (b.r_exec * b.r_eq != 1) return false;
  }
  return true;
}

void emit_batch(const std::vector<CandidateGroup>& groups, const GrpoConfig& cfg,
                const std::string& path) {
  cfg.validate();
  std::vector<json> lines;
  for (const auto& g : groups) {
    validate_group(g);
    std::vector<double> rewards;
    for (const auto& c : g.candidates) rewards.push_back(c.reward);
    lines.push_back(group_to_json(g, group_advantages(rewards, cfg.std_floor)));
  }
  const json header{{"format", kBatchFormat},
                    {"version", kBatchVersion},
                    {"config",
                     {{"epsilon", cfg.epsilon},
                      {"beta", cfg.beta},
                      {"std_floor", cfg.std_floor},
                      {"group_size", cfg.group_size}}},
                    {"groups", groups.size()}};
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write batch file " + path);
    out << header.dump() << '\n';
    for (const auto& l : lines) out << l.dump() << '\n';
    out.flush();
    if (!out) fail(ErrorCode::kIo, "write failed for batch file " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(ErrorCode::kIo, "cannot replace " + path);
}

TrainingBatch read_batch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read batch file " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) fail(ErrorCode::kSchema, "batch file has no header");
  TrainingBatch batch;
  try {
    const auto header = json::parse(lines[0]);
    if (header.value("format", "") != kBatchFormat) fail(ErrorCode::kSchema, "not a training batch file");
    if (header.value("version", 0) != kBatchVersion) fail(ErrorCode::kSchema, "unsupported batch version");
    const auto& c = header.at("config");
    batch.config = {c.at("epsilon").get<double>(), c.at("beta").get<double>(),
                    c.at("std_floor").get<double>(), c.at("group_size").get<int>()};
    if (header.at("groups").get<std::size_t>() != lines.size() - 1) {
      fail(ErrorCode::kSchema, "group count does not match the header");
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto j = json::parse(lines[i]);
      CandidateGroup g;
      g.query_id = j.at("query_id").get<std::string>();
      g.prompt_fingerprint = j.at("prompt_fingerprint").get<std::string>();
      std::vector<double> adv;
      for (const auto& cj : j.at("candidates")) {
        CandidateTrace t;
        t.sql = cj.at("sql").get<std::string>();
        t.reward = cj.at("reward").get<double>();
        t.logp_current = double_list(cj.at("logp_current"));
        t.logp_old = double_list(cj.at("logp_old"));
        t.logp_ref = double_list(cj.at("logp_ref"));
        adv.push_back(cj.at("advantage").get<double>());
        g.candidates.push_back(std::move(t));
      }
      batch.groups.push_back(std::move(g));
      batch.advantages.push_back(std::move(adv));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchema, std::string("malformed batch file: ") + e.what());
  }
  return batch;
}

}  // namespace e3::grpo
