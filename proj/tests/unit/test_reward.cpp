#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "e3/error.hpp"
#include "e3/reward.hpp"
#include "json.hpp"
#include "support/fake_db.hpp"

using namespace e3::reward;

namespace {

std::unique_ptr<e3::db::Database> stub() {
  return e3::db::open_database({std::string("stub:") + E3_FIXTURE_DIR + "/stubdb", 300});
}

e3::ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const e3::Error& e) {
    return e.code();
  }
  return static_cast<e3::ErrorCode>(0);
}

const std::string kQ = "SELECT c_id FROM customer WHERE c_balance > 100";
const std::string kQFlipped = "SELECT c_id FROM customer WHERE 100 < c_balance";

}  // namespace

TEST_CASE("exec_reward") {
  auto db = stub();
  CHECK(exec_reward(kQ, *db) == 1);
  CHECK(exec_reward("SELECT c_nope FROM customer", *db) == 0);
  CHECK(exec_reward("SELEC 1", *db) == 0);
  CHECK(exec_reward("", *db) == 0);
  CHECK(exec_reward("  \n", *db) == 0);
  CHECK(exec_reward("DELETE FROM customer", *db) == 0);

  testing::FakeDb down;
  down.forced = e3::ErrorCode::kConnection;
  CHECK(code_of([&] { exec_reward("SELECT 1", down); }) == e3::ErrorCode::kConnection);
}

TEST_CASE("perf_reward") {
  CHECK(perf_reward(10, 7.5) == 0.25);
  CHECK(perf_reward(10, 10) == 0.0);
  CHECK(perf_reward(10, 12) == 0.0);
  CHECK(perf_reward(10, 0) == 1.0);
  CHECK(code_of([] { perf_reward(0, 1); }) == e3::ErrorCode::kNonPositiveBaseline);
  CHECK(code_of([] { perf_reward(-3, 1); }) == e3::ErrorCode::kNonPositiveBaseline);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(1e-6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double t = u(rng), a = u(rng), b = u(rng);
    const double ra = perf_reward(t, a);
    CHECK(ra >= 0.0);
    CHECK(ra <= 1.0);
    // strictly increasing as t_new drops below t_orig
    const double lo = std::min(a, b), hi = std::max(a, b);
    if (lo < hi && lo < t) CHECK(perf_reward(t, lo) > perf_reward(t, hi));
  }
}

TEST_CASE("weights validation") {
  CHECK_NOTHROW(RewardWeights{}.validate());
  CHECK(code_of([] { RewardWeights{0, 0, 0}.validate(); }) == e3::ErrorCode::kConfig);
  CHECK(code_of([] { RewardWeights{1, -1, 0}.validate(); }) == e3::ErrorCode::kConfig);
}

TEST_CASE("identical queries are decided by the first stage") {
  auto db = stub();
  SampledInstances inst(*db);
  auto checker = make_scripted_checker([](auto, auto) { return CheckerResponse{CheckerAnswer::kNeq, ""}; });
  EqContext ctx{checker.get(), nullptr, &inst, ""};
  for (const std::string& q : {kQ, std::string("select C_ID from CUSTOMER where (c_balance > 100)")}) {
    const auto [r, v] = equivalence_reward(kQ, q, ctx);
    CHECK(r == 1);
    CHECK(v.decided_by == EqStage::kFormalChecker);
  }
}

TEST_CASE("stage precedence over every scripted combination") {
  auto db = stub();
  SampledInstances inst(*db);
  const CheckerAnswer checks[] = {CheckerAnswer::kEq, CheckerAnswer::kNeq, CheckerAnswer::kUnknown};
  const JudgeAnswer judges[] = {JudgeAnswer::kEq, JudgeAnswer::kNeq, JudgeAnswer::kInconclusive};
  // the second pair is not equivalent on data, the first is
  const std::pair<std::string, std::string> pairs[] = {{kQ, kQFlipped}, {kQ, kQ + " AND 1=0"}};
  for (const auto& [q, q_new] : pairs) {
    const bool truly_eq = (q_new == kQFlipped);
    for (auto c : checks) {
      for (auto j : judges) {
        int judge_calls = 0;
        auto checker = make_scripted_checker([c](auto, auto) { return CheckerResponse{c, "p"}; });
        auto judge = make_scripted_judge([j, &judge_calls](auto, auto) {
          ++judge_calls;
          return j;
        });
        EqContext ctx{checker.get(), judge.get(), &inst, ""};
        const auto [r, v] = equivalence_reward(q, q_new, ctx);
        if (c != CheckerAnswer::kUnknown) {
          CHECK(v.decided_by == EqStage::kFormalChecker);
          CHECK(r == (c == CheckerAnswer::kEq ? 1 : 0));
          CHECK(judge_calls == 0);
        } else if (j != JudgeAnswer::kInconclusive) {
          CHECK(v.decided_by == EqStage::kLlmJudge);
          CHECK(r == (j == JudgeAnswer::kEq ? 1 : 0));
        } else {
          CHECK(v.decided_by == EqStage::kExecutionCompare);
          CHECK(r == (truly_eq ? 1 : 0));
        }
      }
    }
  }
}

TEST_CASE("unavailable stages fall through") {
  auto db = stub();
  SampledInstances inst(*db);
  auto down = make_scripted_checker([](auto, auto) -> CheckerResponse {
    e3::fail(e3::ErrorCode::kConnection, "checker down");
  });
  auto slow = make_scripted_judge([](auto, auto) -> JudgeAnswer {
    e3::fail(e3::ErrorCode::kEndpointTimeout, "judge slow");
  });
  EqContext ctx{down.get(), slow.get(), &inst, ""};
  const auto [r, v] = equivalence_reward(kQ, kQFlipped, ctx);
  CHECK(r == 1);
  CHECK(v.decided_by == EqStage::kExecutionCompare);

  EqContext none{down.get(), slow.get(), nullptr, ""};
  CHECK(code_of([&] { equivalence_reward(kQ, kQFlipped, none); }) ==
        e3::ErrorCode::kUnresolvedEquivalence);

  testing::FakeDb broken;
  broken.forced = e3::ErrorCode::kConnection;
  SampledInstances dead(broken);
  EqContext dead_ctx{nullptr, nullptr, &dead, ""};
  CHECK(code_of([&] { equivalence_reward(kQ, kQFlipped, dead_ctx); }) ==
        e3::ErrorCode::kUnresolvedEquivalence);
}

TEST_CASE("commuted join with an eq checker") {
  auto checker = make_scripted_checker([](auto, auto) { return CheckerResponse{CheckerAnswer::kEq, "proof"}; });
  EqContext ctx{checker.get(), nullptr, nullptr, ""};
  const auto [r, v] = equivalence_reward(
      "SELECT c.c_name, o.o_total FROM customer c JOIN orders o ON c.c_id = o.o_cid",
      "SELECT c.c_name, o.o_total FROM orders o JOIN customer c ON c.c_id = o.o_cid", ctx);
  CHECK(r == 1);
  CHECK(v.decided_by == EqStage::kFormalChecker);
  CHECK(v.detail == "proof");
}

TEST_CASE("execution compare") {
  auto db = stub();
  SampledInstances inst(*db);
  EqContext ctx{nullptr, nullptr, &inst, ""};

  // fixture-derived: the mutation empties a non-empty result
  CHECK_FALSE(db->execute(kQ).rows.empty());
  CHECK(db->execute(kQ + " AND 1=0").rows.empty());
  auto [r0, v0] = equivalence_reward(kQ, kQ + " AND 1=0", ctx);
  CHECK(r0 == 0);
  CHECK(v0.decided_by == EqStage::kExecutionCompare);

  // ordering matters only when the original orders
  const std::string asc = "SELECT c_id FROM customer ORDER BY c_id";
  const std::string desc = "SELECT c_id FROM customer ORDER BY c_id DESC";
  CHECK(equivalence_reward(asc, desc, ctx).first == 0);
  CHECK(equivalence_reward("SELECT c_id FROM customer", desc, ctx).first == 1);

  // agrees on the full instance, differs once rows are sampled away
  CHECK(compare_results(db->execute("SELECT count(*) FROM customer"), db->execute("SELECT 200"), false));
  CHECK(equivalence_reward("SELECT count(*) FROM customer", "SELECT 200", ctx).first == 0);

  // duplicates matter under bag semantics
  CHECK(equivalence_reward("SELECT c_nation FROM customer", "SELECT DISTINCT c_nation FROM customer", ctx).first == 0);

  // known rewrite pair from the fixture
  CHECK(equivalence_reward(
            "SELECT o_id FROM orders WHERE o_cid IN (SELECT c_id FROM customer WHERE c_nation = 'JAPAN')",
            "SELECT o.o_id FROM orders o JOIN customer c ON o.o_cid = c.c_id WHERE c.c_nation = 'JAPAN'", ctx)
            .first == 1);
}

TEST_CASE("total_reward") {
  testing::FakeDb db;
  db.costs = {{"SELECT a", 10.0}, {"SELECT b", 7.5}, {"SELECT c", 12.0}};
  auto eq = make_scripted_checker([](auto, auto) { return CheckerResponse{CheckerAnswer::kEq, ""}; });
  EqContext ctx{eq.get(), nullptr, nullptr, ""};

  const auto b1 = total_reward("SELECT a", "SELECT b", db, {1, 1, 0}, ctx);
  CHECK(b1.r_total == 2.0);
  const auto b2 = total_reward("SELECT a", "SELECT b", db, {1, 1, 1}, ctx);
  CHECK(b2.r_exec == 1);
  CHECK(b2.r_eq == 1);
  CHECK(b2.r_perf == 0.25);
  CHECK(b2.r_total == 2.25);
  CHECK(b2.t_orig_cost == 10.0);
  CHECK(b2.t_new_cost == 7.5);
  CHECK(total_reward("SELECT a", "SELECT c", db, {1, 1, 1}, ctx).r_total == 2.0);
  CHECK(total_reward("SELECT a", "SELECT b", db, {1, 1, 1}, ctx, 20.0).r_perf == 0.625);

  const auto bad = total_reward("SELECT a", "SELECT nope", db, {3, 2, 1}, ctx);
  CHECK(bad.r_exec == 0);
  CHECK(bad.r_eq == 0);
  CHECK(bad.r_perf == 0);
  CHECK(bad.r_total == 0);
  CHECK_FALSE(bad.verdict);
  CHECK_FALSE(bad.t_new_cost);

  EqContext nothing{};
  const auto unresolved = total_reward("SELECT a", "SELECT b", db, {1, 1, 1}, nothing);
  CHECK(unresolved.unresolved);
  CHECK(unresolved.r_eq == 0);
  CHECK(unresolved.r_total == 1.25);

  // monotone in each component for non-negative weights
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> w(0, 5);
  for (int i = 0; i < 200; ++i) {
    RewardWeights ws{w(rng), w(rng), w(rng) + 0.01};
    const auto lo = total_reward("SELECT a", "SELECT c", db, ws, ctx);
    const auto hi = total_reward("SELECT a", "SELECT b", db, ws, ctx);
    CHECK(lo.r_total <= hi.r_total);
    CHECK(hi.r_total == doctest::Approx(ws.lambda_eq + ws.lambda_exec + 0.25 * ws.lambda_perf));
  }
}

TEST_CASE("total_reward on the stub fixture") {
  auto db = stub();
  SampledInstances inst(*db);
  EqContext ctx{nullptr, nullptr, &inst, ""};
  const auto b = total_reward(
      "SELECT o_id FROM orders WHERE o_cid IN (SELECT c_id FROM customer WHERE c_nation = 'JAPAN')",
      "SELECT o.o_id FROM orders o JOIN customer c ON o.o_cid = c.c_id WHERE c.c_nation = 'JAPAN'", *db,
      {1, 1, 1}, ctx);
  CHECK(b.r_exec == 1);
  CHECK(b.r_eq == 1);
  CHECK(b.verdict->decided_by == EqStage::kExecutionCompare);
  CHECK(b.r_perf == doctest::Approx(0.4));
  CHECK(b.r_total == doctest::Approx(2.4));
}

TEST_CASE("endpoint adapters over a command transport") {
  auto judge = make_endpoint_judge("cmd:cat > /dev/null; echo '{\"verdict\":\"neq\"}'");
  CHECK(judge->judge("SELECT 1", "SELECT 2", "") == JudgeAnswer::kNeq);
  auto checker = make_endpoint_checker(
      "cmd:python3 -c 'import json,sys; r=json.load(sys.stdin); "
      "print(json.dumps({\"verdict\": \"eq\" if r[\"schema\"] == \"s\" else \"unknown\", \"proof\": r[\"rewrite\"]}))'");
  const auto r = checker->check("SELECT 1", "SELECT 1 + 0", "s");
  CHECK(r.answer == CheckerAnswer::kEq);
  CHECK(r.proof == "SELECT 1 + 0");

  auto garbled = make_endpoint_judge("cmd:cat > /dev/null; echo '{\"verdict\":\"maybe\"}'");
  CHECK(code_of([&] { garbled->judge("a", "b", ""); }) == e3::ErrorCode::kMalformedResponse);
  auto dead = make_endpoint_checker("cmd:exit 1");
  CHECK(code_of([&] { dead->check("a", "b", ""); }) == e3::ErrorCode::kMalformedResponse);
  CHECK(code_of([] { make_endpoint_judge("ftp://x"); }) == e3::ErrorCode::kConfig);
}

TEST_CASE("evaluation log") {
  const auto path = (std::filesystem::temp_directory_path() / "e3_eval_log.jsonl").string();
  std::filesystem::remove(path);
  {
    EvalLog log(path);
    RewardBreakdown b;
    b.r_exec = 1;
    b.r_eq = 1;
    b.r_perf = 0.25;
    b.r_total = 2.25;
    b.verdict = EquivalenceVerdict{EqResult::kEquivalent, EqStage::kLlmJudge, "judge: eq"};
    b.t_orig_cost = 10;
    b.t_new_cost = 7.5;
    log.append("q1", 0, "SELECT 1", b);
    log.append("q1", 1, "", RewardBreakdown{});
  }
  std::ifstream in(path);
  std::string line;
  std::vector<nlohmann::json> recs;
  while (std::getline(in, line)) recs.push_back(nlohmann::json::parse(line));
  REQUIRE(recs.size() == 2);
  CHECK(recs[0]["decided_by"] == "LlmJudge");
  CHECK(recs[0]["r_total"] == 2.25);
  CHECK(recs[0]["t_new_cost"] == 7.5);
  CHECK(recs[1]["decided_by"].is_null());
  CHECK(recs[1]["candidate"] == 1);
  std::filesystem::remove(path);
}
