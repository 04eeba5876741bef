#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "e3/grpo.hpp"

using namespace e3::grpo;

namespace {

e3::ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const e3::Error& e) {
    return e.code();
  }
  return static_cast<e3::ErrorCode>(0);
}

CandidateTrace trace(double reward, std::vector<double> cur, std::vector<double> old,
                     std::vector<double> ref) {
  return {"SELECT 1", reward, std::move(cur), std::move(old), std::move(ref)};
}

// The two-candidate hand case: rewards [2, 0], ratios [1.5, 0.5].
CandidateGroup hand_group(double ref_shift) {
  CandidateGroup g;
  g.query_id = "hand";
  const double c0 = std::log(0.6), o0 = std::log(0.4);
  const double c1 = std::log(0.2), o1 = std::log(0.4);
  g.candidates.push_back(trace(2, {c0}, {o0}, {c0}));
  g.candidates.push_back(trace(0, {c1}, {o1}, {c1 + ref_shift}));
  return g;
}

double pop_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
double pop_std(const std::vector<double>& v) {
  const double m = pop_mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("group advantages: examples") {
  CHECK(group_advantages({1, 1, 1}) == std::vector<double>{0, 0, 0});
  const auto a = group_advantages({1, 0, 0.5});
  CHECK(a[0] == doctest::Approx(1.2247).epsilon(1e-4));
  CHECK(a[1] == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(a[2] == 0.0);
  CHECK(group_advantages({2, 0}) == std::vector<double>{1, -1});
  CHECK(code_of([] { group_advantages({1}); }) == e3::ErrorCode::kGroupTooSmall);
  CHECK(code_of([] { group_advantages({}); }) == e3::ErrorCode::kGroupTooSmall);
}

TEST_CASE("group advantages: normalization and affine invariance") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> size(2, 16);
  std::uniform_real_distribution<double> r(-5, 5), scale(0.1, 10), shift(-100, 100);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> rewards(size(rng));
    for (auto& x : rewards) x = r(rng);
    const auto a = group_advantages(rewards);
    CHECK(std::abs(pop_mean(a)) < 1e-9);
    CHECK(std::abs(pop_std(a) - 1) < 1e-6);
    const double s = scale(rng), b = shift(rng);
    std::vector<double> moved;
    for (double x : rewards) moved.push_back(s * x + b);
    const auto a2 = group_advantages(moved);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - a2[k]) < 1e-9);
  }
}

TEST_CASE("constant groups give exactly zero advantages") {
  for (double v : {0.0, 1.0, 1.7, 2.3, -0.1, 1e6 + 0.3}) {
    for (std::size_t g = 2; g <= 16; ++g) {
      for (double a : group_advantages(std::vector<double>(g, v))) CHECK(a == 0.0);
    }
  }
}

TEST_CASE("KL estimator") {
  CHECK(kl_penalty({-1, -2}, {-1, -2}) == 0.0);
  CHECK(kl_penalty({-1.0}, {-1.0 + std::log(2.0)}) == doctest::Approx(2 - std::log(2.0) - 1).epsilon(1e-12));
  CHECK(kl_penalty({-1.0}, {-1.0 + std::log(2.0)}) == doctest::Approx(0.3069).epsilon(1e-4));
  CHECK(code_of([] { kl_penalty({-1}, {-1, -2}); }) == e3::ErrorCode::kLengthMismatch);
  CHECK(code_of([] { kl_penalty({}, {}); }) == e3::ErrorCode::kLengthMismatch);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-20, 0);
  for (int i = 0; i < 5000; ++i) {
    const double a = u(rng), b = u(rng);
    CHECK(kl_token(a, b) >= 0.0);
    if (a != b) CHECK(kl_token(a, b) > 0.0);
  }
}

TEST_CASE("loss: hand-evaluated cases") {
  GrpoConfig cfg;
  cfg.epsilon = 0.2;
  cfg.beta = 0;
  auto g = hand_group(0);
  CHECK(std::exp(g.candidates[0].logp_current[0] - g.candidates[0].logp_old[0]) == doctest::Approx(1.5));
  CHECK(std::abs(grpo_loss(g, cfg) - (-0.2)) <= 1e-12);

  cfg.beta = 0.1;
  auto g2 = hand_group(std::log(2.0));
  CHECK(kl_penalty(g2.candidates[1].logp_current, g2.candidates[1].logp_ref) == doctest::Approx(0.3069).epsilon(1e-4));
  CHECK(std::abs(grpo_loss(g2, cfg) - (-0.1847)) <= 1e-4);
  const double exact = -(1.2 - 0.8 - 0.1 * (1 - std::log(2.0))) / 2;
  CHECK(grpo_loss(g2, cfg) == doctest::Approx(exact).epsilon(1e-12));

  // identical policies, symmetric advantages
  CandidateGroup same;
  same.candidates.push_back(trace(1, {-1, -2}, {-1, -2}, {-1, -2}));
  same.candidates.push_back(trace(0, {-3, -1}, {-3, -1}, {-3, -1}));
  CHECK(grpo_loss(same, GrpoConfig{}) == 0.0);
}

TEST_CASE("loss: clip branch selection matches the min of both branches") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> lp(-4, -0.01);
  std::uniform_real_distribution<double> rw(0, 3);
  for (int round = 0; round < 300; ++round) {
    GrpoConfig cfg;
    cfg.beta = 0;
    CandidateGroup g;
    const int n = 2 + round % 5;
    for (int i = 0; i < n; ++i) g.candidates.push_back(trace(rw(rng), {lp(rng)}, {lp(rng)}, {lp(rng)}));
    std::vector<double> rewards;
    for (const auto& c : g.candidates) rewards.push_back(c.reward);
    const auto adv = group_advantages(rewards);
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      const auto& c = g.candidates[i];
      const double rho = std::exp(c.logp_current[0] - c.logp_old[0]);
      const double clipped = std::clamp(rho, 1 - cfg.epsilon, 1 + cfg.epsilon);
      sum += std::min(rho * adv[i], clipped * adv[i]);
    }
    CHECK(grpo_loss(g, cfg) == doctest::Approx(-sum / n).epsilon(1e-12));
  }
}

TEST_CASE("loss gradient agrees with central differences") {
  // logp_current[i][t] = log_sigmoid(w * x_it + b_it)
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-2, 2);
  int checked = 0;
  for (int round = 0; round < 50; ++round) {
    const int n = 2 + round % 4;
    std::vector<std::vector<std::pair<double, double>>> coef(n);
    CandidateGroup g;
    for (int i = 0; i < n; ++i) {
      const int len = 1 + (round + i) % 4;
      CandidateTrace t;
      t.reward = u(rng);
      for (int k = 0; k < len; ++k) {
        coef[i].push_back({u(rng), u(rng)});
        t.logp_old.push_back(-std::log1p(std::exp(-u(rng))));
        t.logp_ref.push_back(-std::log1p(std::exp(-u(rng))));
        t.logp_current.push_back(0);
      }
      g.candidates.push_back(t);
    }
    GrpoConfig cfg;
    cfg.beta = 0.05 * (round % 3);
    const auto at = [&](double w) {
      auto h = g;
      for (int i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < coef[i].size(); ++k) {
          h.candidates[i].logp_current[k] = -std::log1p(std::exp(-(w * coef[i][k].first + coef[i][k].second)));
        }
      }
      return h;
    };
    const double w = u(rng);
    const auto g0 = at(w);
    bool near_boundary = false;
    for (const auto& c : g0.candidates) {
      for (std::size_t k = 0; k < c.logp_current.size(); ++k) {
        const double rho = std::exp(c.logp_current[k] - c.logp_old[k]);
        if (std::abs(rho - 0.8) < 1e-3 || std::abs(rho - 1.2) < 1e-3) near_boundary = true;
      }
    }
    if (near_boundary) continue;
    const auto grad = grpo_loss_gradient(g0, cfg);
    double analytic = 0;
    for (int i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < coef[i].size(); ++k) {
        const double z = w * coef[i][k].first + coef[i][k].second;
        const double dlogsig = 1.0 / (1.0 + std::exp(z));  // d/dz log_sigmoid(z)
        analytic += grad.d_logp_current[i][k] * dlogsig * coef[i][k].first;
      }
    }
    const double h = 1e-6;
    const double numeric = (grpo_loss(at(w + h), cfg) - grpo_loss(at(w - h), cfg)) / (2 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    CHECK(std::abs(analytic - numeric) / denom < 1e-5);
    ++checked;
  }
  CHECK(checked > 30);
}

TEST_CASE("group validation") {
  CandidateGroup one;
  one.candidates.push_back(trace(1, {-1}, {-1}, {-1}));
  CHECK(code_of([&] { grpo_loss(one, {}); }) == e3::ErrorCode::kGroupTooSmall);
  auto g = hand_group(0);
  g.candidates[1].logp_ref.push_back(-1);
  CHECK(code_of([&] { grpo_loss(g, {}); }) == e3::ErrorCode::kLengthMismatch);
  auto pos = hand_group(0);
  pos.candidates[0].logp_old[0] = 0.1;
  CHECK(code_of([&] { grpo_loss(pos, {}); }) == e3::ErrorCode::kInvalidArgument);
  GrpoConfig bad;
  bad.epsilon = 0;
  CHECK(code_of([&] { grpo_loss(hand_group(0), bad); }) == e3::ErrorCode::kConfig);
}

TEST_CASE("curriculum stages") {
  CurriculumStage s1{Stage::kCorrectnessFirst, {1, 1, 1}, 0};
  CHECK(stage_weights(s1) == e3::reward::RewardWeights{1, 1, 0});
  CurriculumStage s2{Stage::kOptimizationAware, {1, 1, 1}, 0.1};
  CHECK(stage_weights(s2) == e3::reward::RewardWeights{1, 1, 1});
  CHECK_NOTHROW(s2.validate());
  CurriculumStage bad{Stage::kCorrectnessFirst, {1, 1, 1}, 0.1};
  CHECK(code_of([&] { bad.validate(); }) == e3::ErrorCode::kConfig);
  CurriculumStage too_much{Stage::kOptimizationAware, {1, 1, 1}, 1.0};
  CHECK(code_of([&] { too_much.validate(); }) == e3::ErrorCode::kConfig);
  CurriculumStage perf_only{Stage::kCorrectnessFirst, {0, 0, 1}, 0};
  CHECK(code_of([&] { perf_only.validate(); }) == e3::ErrorCode::kConfig);
}

TEST_CASE("curriculum scheduler") {
  CurriculumScheduler sched(200, 0.95);
  // 189 correct of 200: 94.5%, not yet
  for (int i = 0; i < 200; ++i) CHECK_FALSE(sched.record(i >= 11));
  CHECK(sched.stage() == Stage::kCorrectnessFirst);
  CHECK(sched.window_rate() == doctest::Approx(0.945));
  // one more correct group pushes the oldest failure out: 190/200
  CHECK(sched.record(true));
  CHECK(sched.stage() == Stage::kOptimizationAware);
  for (int i = 0; i < 300; ++i) CHECK_FALSE(sched.record(false));
  CHECK(sched.stage() == Stage::kOptimizationAware);

  CurriculumScheduler fresh(200, 0.95);
  for (int i = 0; i < 199; ++i) CHECK_FALSE(fresh.record(true));
  CHECK(fresh.record(true));

  e3::reward::RewardBreakdown ok, bad;
  ok.r_exec = ok.r_eq = 1;
  bad.r_exec = 1;
  CHECK(group_correct({ok, ok}));
  CHECK_FALSE(group_correct({ok, bad}));
  CHECK_FALSE(group_correct({}));
}

TEST_CASE("rehearsal mixing") {
  const std::vector<int> batch{1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<int> pool{100, 101, 102, 103, 104};
  CHECK(mix_rehearsal(batch, pool, 0.0, 1) == batch);
  CHECK(mix_rehearsal(batch, std::vector<int>{}, 0.0, 1) == batch);
  const auto mixed = mix_rehearsal(batch, pool, 0.25, 7);
  CHECK(mixed.size() == 10);
  CHECK(std::count_if(mixed.begin(), mixed.end(), [](int x) { return x >= 100; }) == 2);
  // stage-2 items keep their relative order and none are dropped
  std::vector<int> kept;
  for (int x : mixed) {
    if (x < 100) kept.push_back(x);
  }
  CHECK(kept == batch);
  CHECK(mix_rehearsal(batch, pool, 0.25, 7) == mixed);
  // without replacement
  const auto many = mix_rehearsal(batch, pool, 0.5, 3);
  std::set<int> drawn;
  for (int x : many) {
    if (x >= 100) CHECK(drawn.insert(x).second);
  }
  CHECK(drawn.size() == 4);
  CHECK(mix_rehearsal(batch, pool, 0.9, 3).size() == 8 + 5);
  CHECK(code_of([&] { mix_rehearsal(batch, std::vector<int>{}, 0.1, 1); }) == e3::ErrorCode::kEmptyRehearsalPool);
  CHECK(code_of([&] { mix_rehearsal(batch, pool, 1.0, 1); }) == e3::ErrorCode::kInvalidArgument);

  std::set<std::vector<int>> seen;
  for (std::uint64_t seed = 0; seed < 20; ++seed) seen.insert(mix_rehearsal(batch, pool, 0.25, seed));
  CHECK(seen.size() > 1);
}

TEST_CASE("training batch files") {
  const auto path = (std::filesystem::temp_directory_path() / "e3_batch.jsonl").string();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> lp(-5, 0), rw(0, 3);
  std::vector<CandidateGroup> groups;
  for (int gi = 0; gi < 4; ++gi) {
    CandidateGroup g;
    g.query_id = "q" + std::to_string(gi);
    g.prompt_fingerprint = "fp" + std::to_string(gi);
    for (int i = 0; i < 8; ++i) {
      CandidateTrace t;
      t.sql = "SELECT " + std::to_string(i) + " -- \"quoted\"\n";
      t.reward = gi == 3 ? 1.0 : rw(rng);
      for (int k = 0; k < 1 + i % 3; ++k) {
        t.logp_current.push_back(lp(rng));
        t.logp_old.push_back(lp(rng));
        t.logp_ref.push_back(lp(rng));
      }
      g.candidates.push_back(t);
    }
    groups.push_back(g);
  }
  GrpoConfig cfg;
  emit_batch(groups, cfg, path);
  const auto back = read_batch(path);
  CHECK(back.config == cfg);
  CHECK(back.groups == groups);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    std::vector<double> rewards;
    for (const auto& c : back.groups[gi].candidates) rewards.push_back(c.reward);
    CHECK(back.advantages[gi] == group_advantages(rewards, cfg.std_floor));
  }
  CHECK(back.advantages[3] == std::vector<double>(8, 0.0));

  std::ifstream f1(path);
  const std::string first((std::istreambuf_iterator<char>(f1)), {});
  emit_batch(groups, cfg, path);
  std::ifstream f2(path);
  CHECK(std::string((std::istreambuf_iterator<char>(f2)), {}) == first);

  emit_batch({}, cfg, path);
  const auto empty = read_batch(path);
  CHECK(empty.groups.empty());

  {
    std::ofstream bad(path, std::ios::trunc);
    bad << "{\"format\":\"e3-grpo-batch\",\"version\":1,\"config\":{},\"groups\":0}\n";
  }
  CHECK(code_of([&] { read_batch(path); }) == e3::ErrorCode::kSchema);
  std::filesystem::remove(path);
  CHECK(code_of([&] { read_batch(path); }) == e3::ErrorCode::kIo);
}
