#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "e3/error.hpp"
#include "e3/pipeline.hpp"
#include "json.hpp"

using namespace e3::pipeline;
using e3::retrieval::ScoredDemo;

namespace {

e3::ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const e3::Error& e) {
    return e.code();
  }
  return static_cast<e3::ErrorCode>(0);
}

const std::string kOrig =
    "SELECT o_id FROM orders WHERE o_cid IN (SELECT c_id FROM customer WHERE c_nation = 'JAPAN')";
const std::string kJoin =
    "SELECT o.o_id FROM orders o JOIN customer c ON o.o_cid = c.c_id WHERE c.c_nation = 'JAPAN'";
const std::string kExists =
    "SELECT o_id FROM orders WHERE EXISTS (SELECT 1 FROM customer WHERE c_id = o_cid AND c_nation = 'JAPAN')";

ScoredDemo scored(std::string o, std::string r, double score) {
  ScoredDemo d;
  d.demo.original_sql = std::move(o);
  d.demo.rewritten_sql = std::move(r);
  d.score = score;
  return d;
}

e3::plan::ExecutionHint hint_of(std::string text) {
  e3::plan::ExecutionHint h;
  h.hint_text = std::move(text);
  return h;
}

std::string fenced(const std::string& sql) { return "Here you go:\n```sql\n" + sql + "\n```\nDone."; }

struct Harness {
  std::unique_ptr<e3::db::Database> db =
      e3::db::open_database({std::string("stub:") + E3_FIXTURE_DIR + "/stubdb", 300});
  e3::retrieval::DemoPool pool;
  std::unique_ptr<e3::retrieval::EmbeddingProvider> embedder = e3::retrieval::make_hash_ngram_provider(64);
  std::vector<std::string> script;
  int calls = 0;
  std::unique_ptr<Generator> gen = make_scripted_generator([this](const std::string&, int n) {
    ++calls;
    std::vector<Completion> out;
    for (int i = 0; i < n && i < static_cast<int>(script.size()); ++i) {
      out.push_back({fenced(script[i]), {-0.5, -0.25}, {}});
    }
    return out;
  });
  std::int64_t now = 5000;
  RewriteContext ctx;
  RewriteConfig cfg;

  Harness() {
    ctx.db = db.get();
    ctx.pool = &pool;
    ctx.embedder = embedder.get();
    ctx.generator = gen.get();
    ctx.clock = [this] { return now++; };
  }
  RewriteOutcome run(const std::string& q, std::vector<std::string> cands) {
    script = std::move(cands);
    cfg.generator.samples_n = static_cast<int>(script.size());
    return rewrite(q, ctx, cfg);
  }
};

}  // namespace

TEST_CASE("SQL extraction") {
  CHECK(extract_sql("```sql\nSELECT 1;\n```") == "SELECT 1");
  CHECK(extract_sql("blah\n```\nselect a from t\n```\ntrailing") == "select a from t");
  CHECK(extract_sql(fenced("SELECT a FROM t WHERE b = 'x;y'")) == "SELECT a FROM t WHERE b = 'x;y'");
  CHECK(extract_sql("```sql\nSELECT 1; SELECT 2;\n```") == "SELECT 1");
  CHECK(extract_sql("```\n\n```\nthen SELECT 3") == "SELECT 3");
  CHECK(extract_sql("The rewrite is SELECT a FROM t; it avoids a scan.") == "SELECT a FROM t");
  CHECK(extract_sql("Answer:\nWITH x AS (SELECT 1) SELECT * FROM x\n\nExplanation follows") ==
        "WITH x AS (SELECT 1) SELECT * FROM x");
  CHECK(extract_sql("We selected nothing.") == "");
  CHECK(extract_sql("I cannot help with that.") == "");
  CHECK(extract_sql("") == "");
  CHECK(extract_sql("select\n  a\nfrom t") == "select\n  a\nfrom t");
}

TEST_CASE("prompt layout") {
  const auto p0 = assemble_prompt("SELECT a FROM t", hint_of("Seq Scan rel=t (cost=1 rows=10)"), {},
                                  {"HEADER", 4096});
  CHECK(p0.text ==
        "HEADER\n\n"
        "-- Execution hint\n"
        "Seq Scan rel=t (cost=1 rows=10)\n\n"
        "-- Target query\n"
        "SELECT a FROM t\n");
  CHECK(p0.text.find("-- Example") == std::string::npos);

  const std::vector<ScoredDemo> demos{scored("SELECT 1", "SELECT 2", 0.9), scored("SELECT 3", "SELECT 4", 0.4)};
  const auto p2 = assemble_prompt("SELECT a FROM t", hint_of("H"), demos, {"HEADER", 4096});
  CHECK(p2.text ==
        "HEADER\n\n"
        "-- Example original\nSELECT 1\n-- Example rewrite\nSELECT 2\n\n"
        "-- Example original\nSELECT 3\n-- Example rewrite\nSELECT 4\n\n"
        "-- Execution hint\nH\n\n"
        "-- Target query\nSELECT a FROM t\n");
  CHECK(p2.demos_used == 2);
  CHECK(assemble_prompt("SELECT a FROM t", hint_of("H"), demos, {"HEADER", 4096}).text == p2.text);
}

TEST_CASE("prompt budget") {
  const std::vector<ScoredDemo> demos{scored("SELECT 'high'", "SELECT 1", 0.9),
                                      scored("SELECT 'low'", "SELECT 1", 0.1),
                                      scored("SELECT 'mid'", "SELECT 1", 0.5)};
  const auto hint = hint_of("line one\nline two\nline three");
  const auto full = assemble_prompt("SELECT 1", hint, demos, {"H", 4096});
  CHECK(estimate_tokens("abcd") == 1);
  CHECK(estimate_tokens("abcde") == 2);

  const auto budget_for = [&](std::size_t bytes) { return (bytes + 3) / 4; };
  // one demo block is 55-57 bytes; a budget just under the full prompt drops exactly one
  const auto p1 = assemble_prompt("SELECT 1", hint, demos, {"H", budget_for(full.text.size()) - 1});
  CHECK(p1.demos_used == 2);
  CHECK(p1.text.find("'low'") == std::string::npos);
  CHECK(p1.text.find("'high'") != std::string::npos);
  CHECK(p1.text.find("'mid'") != std::string::npos);

  const auto bare = assemble_prompt("SELECT 1", hint_of(""), {}, {"H", 4096});
  const auto no_demos = assemble_prompt("SELECT 1", hint, {}, {"H", 4096});
  const auto p2 = assemble_prompt("SELECT 1", hint, demos, {"H", budget_for(no_demos.text.size())});
  CHECK(p2.demos_used == 0);
  CHECK(p2.hint_lines_dropped == 0);
  const auto p3 = assemble_prompt("SELECT 1", hint, demos, {"H", budget_for(no_demos.text.size()) - 3});
  CHECK(p3.demos_used == 0);
  CHECK(p3.hint_lines_dropped >= 1);
  CHECK(p3.text.find("line one") != std::string::npos);
  CHECK(p3.text.find("line three") == std::string::npos);
  CHECK(estimate_tokens(p3.text) <= budget_for(no_demos.text.size()) - 3);
  CHECK(code_of([&] { assemble_prompt("SELECT 1", hint, demos, {"H", budget_for(bare.text.size()) - 1}); }) ==
        e3::ErrorCode::kPromptTooLong);
}

TEST_CASE("candidate generation with retries") {
  GeneratorConfig cfg;
  cfg.samples_n = 3;
  auto three = make_scripted_generator([](const std::string&, int n) {
    std::vector<Completion> out;
    for (int i = 0; i < n; ++i) out.push_back({fenced("SELECT " + std::to_string(i)), {}, {}});
    return out;
  });
  const auto c = generate_candidates(*three, "p", cfg);
  REQUIRE(c.size() == 3);
  CHECK(c[2].sql == "SELECT 2");

  int calls = 0;
  auto flaky = make_scripted_generator([&](const std::string&, int n) -> std::vector<Completion> {
    if (++calls == 1) e3::fail(e3::ErrorCode::kEndpointTimeout, "slow");
    return std::vector<Completion>(n, Completion{"no sql here", {}, {}});
  });
  const auto f = generate_candidates(*flaky, "p", cfg);
  CHECK(calls == 2);
  REQUIRE(f.size() == 3);
  CHECK(f[0].sql.empty());

  // two completions, then failures: partial group of two is kept
  calls = 0;
  auto partial = make_scripted_generator([&](const std::string&, int) -> std::vector<Completion> {
    if (++calls == 1) return {{"SELECT 1", {}, {}}, {"SELECT 2", {}, {}}};
    e3::fail(e3::ErrorCode::kMalformedResponse, "bad");
  });
  cfg.samples_n = 8;
  CHECK(generate_candidates(*partial, "p", cfg).size() == 2);
  CHECK(calls == 3);

  calls = 0;
  auto lonely = make_scripted_generator([&](const std::string&, int) -> std::vector<Completion> {
    if (++calls == 1) return {{"SELECT 1", {}, {}}};
    e3::fail(e3::ErrorCode::kEndpointTimeout, "slow");
  });
  CHECK(code_of([&] { generate_candidates(*lonely, "p", cfg); }) == e3::ErrorCode::kEndpointTimeout);

  calls = 0;
  auto config_error = make_scripted_generator([&](const std::string&, int) -> std::vector<Completion> {
    ++calls;
    e3::fail(e3::ErrorCode::kConfig, "nope");
  });
  CHECK(code_of([&] { generate_candidates(*config_error, "p", cfg); }) == e3::ErrorCode::kConfig);
  CHECK(calls == 1);
}

TEST_CASE("endpoint generator over a command transport") {
  GeneratorConfig cfg;
  cfg.samples_n = 2;
  cfg.endpoint =
      "cmd:python3 -c 'import json,sys; r=json.load(sys.stdin); "
      "print(json.dumps({\"completions\": [\"```sql\\nSELECT %d\\n```\" % i for i in range(r[\"n\"])] "
      "if r[\"max_tokens\"] == 512 else []}))'";
  auto gen = make_endpoint_generator();
  const auto c = generate_candidates(*gen, "prompt", cfg);
  REQUIRE(c.size() == 2);
  CHECK(c[1].sql == "SELECT 1");
  cfg.endpoint = "cmd:cat > /dev/null; echo '{\"choices\": [{\"text\": \"SELECT 7\", \"logprobs\": [-1, -2]}, {\"text\": \"x\"}]}'";
  const auto d = generate_candidates(*gen, "prompt", cfg);
  CHECK(d[0].sql == "SELECT 7");
  CHECK(d[0].raw.logprobs == std::vector<double>{-1, -2});
  CHECK(d[1].sql.empty());
  cfg.endpoint = "cmd:cat > /dev/null; echo '{\"other\": 1}'";
  CHECK(code_of([&] { generate_candidates(*gen, "prompt", cfg); }) == e3::ErrorCode::kMalformedResponse);
}

TEST_CASE("rewrite: non-executable candidates return the original") {
  Harness h;
  const auto out = h.run(kOrig, {"SELECT nope FROM orders", "", "DELETE FROM orders"});
  CHECK(out.used_original);
  CHECK(out.chosen_sql == kOrig);
  CHECK_FALSE(out.chosen_index);
  CHECK_FALSE(out.pool_admitted);
  CHECK(h.pool.size() == 0);
  for (const auto& b : out.breakdowns) CHECK(b.r_total == 0);
}

TEST_CASE("rewrite: cheapest equivalent candidate wins and feeds the pool") {
  Harness h;
  const std::string wrong = kOrig + " AND 1=0";
  const auto out = h.run(kOrig, {kExists, wrong, kJoin});
  REQUIRE(out.chosen_index);
  CHECK(*out.chosen_index == 2);
  CHECK(out.chosen_sql == kJoin);
  CHECK_FALSE(out.used_original);
  CHECK(out.breakdowns[0].t_new_cost == 7.0);
  CHECK(out.breakdowns[1].r_eq == 0);
  CHECK(out.breakdowns[2].t_orig_cost == 10.0);
  CHECK(out.breakdowns[2].t_new_cost == 6.0);
  // cost ratio 10/6 > 1.5
  CHECK(out.admission_speedup == doctest::Approx(10.0 / 6.0));
  CHECK(out.pool_admitted);
  CHECK(h.pool.size() == 1);
  CHECK(h.pool.entries()[0].created_at == 5000);

  // the admitted pair shows up as a demonstration next time
  const auto again = h.run(kOrig, {kExists});
  CHECK(again.prompt.find("-- Example original\n" + kOrig + "\n-- Example rewrite\n" + kJoin) != std::string::npos);
  CHECK(again.chosen_sql == kExists);
  // 10/7 = 1.43 is below the admission threshold
  CHECK(again.admission_speedup == doctest::Approx(10.0 / 7.0));
  CHECK_FALSE(again.pool_admitted);
  CHECK(h.pool.size() == 1);
}

TEST_CASE("rewrite: ties go to the earliest candidate") {
  Harness h;
  const auto out = h.run(kOrig, {kExists, kJoin, kJoin + " ", kExists});
  CHECK(*out.chosen_index == 1);
}

TEST_CASE("rewrite: measured latency confirmation") {
  Harness h;
  h.cfg.confirm_latency = true;
  const auto out = h.run(kOrig, {kJoin});
  // scripted latencies 6 s and 3 s
  CHECK(out.admission_speedup == 2.0);
  CHECK(out.pool_admitted);
}

TEST_CASE("rewrite: a non-equivalent candidate is never chosen") {
  Harness h;
  const auto out = h.run("SELECT c_id FROM customer WHERE c_balance > 100",
                         {"SELECT c_id FROM customer WHERE c_balance > 100 AND 1=0",
                          "SELECT c_id FROM customer WHERE c_balance > 200"});
  CHECK(out.used_original);
  CHECK(out.chosen_sql == "SELECT c_id FROM customer WHERE c_balance > 100");
}

TEST_CASE("rewrite: concurrent scoring matches sequential scoring") {
  Harness seq, par;
  par.cfg.workers = 4;
  const std::vector<std::string> cands{kExists, kOrig + " AND 1=0", kJoin, "SELECT x", kJoin, kOrig};
  const auto a = seq.run(kOrig, cands);
  const auto b = par.run(kOrig, cands);
  REQUIRE(a.breakdowns.size() == b.breakdowns.size());
  for (std::size_t i = 0; i < a.breakdowns.size(); ++i) {
    CHECK(a.breakdowns[i].r_total == b.breakdowns[i].r_total);
    CHECK(a.breakdowns[i].verdict == b.breakdowns[i].verdict);
  }
  CHECK(a.chosen_index == b.chosen_index);
}

TEST_CASE("rewrite: evaluation log records every candidate") {
  Harness h;
  const auto path = (std::filesystem::temp_directory_path() / "e3_pipeline_log.jsonl").string();
  std::filesystem::remove(path);
  {
    e3::reward::EvalLog log(path);
    h.ctx.log = &log;
    h.ctx.query_id = "q7";
    h.run(kOrig, {kJoin, "nonsense"});
  }
  std::ifstream in(path);
  std::vector<nlohmann::json> recs;
  for (std::string line; std::getline(in, line);) recs.push_back(nlohmann::json::parse(line));
  REQUIRE(recs.size() == 2);
  CHECK(recs[0]["query_id"] == "q7");
  CHECK(recs[0]["r_eq"] == 1);
  CHECK(recs[1]["r_exec"] == 0);
  std::filesystem::remove(path);
}

TEST_CASE("collect_group builds a GRPO group with stage weights") {
  Harness h;
  h.script = {kJoin, "SELECT nope", kExists};
  h.cfg.generator.samples_n = 3;
  h.ctx.query_id = "tpch-4";
  e3::grpo::CurriculumStage stage{e3::grpo::Stage::kCorrectnessFirst, {1, 1, 1}, 0};
  const auto g = collect_group(kOrig, h.ctx, h.cfg, stage);
  REQUIRE(g.group.candidates.size() == 3);
  CHECK(g.group.query_id == "tpch-4");
  CHECK(g.group.prompt_fingerprint == e3::sql::to_hex16(e3::sql::fnv1a64(g.prompt)));
  CHECK(g.group.candidates[0].reward == 2.0);
  CHECK(g.group.candidates[1].reward == 0.0);
  CHECK(g.group.candidates[2].reward == 2.0);
  CHECK(g.group.candidates[0].logp_old == g.group.candidates[0].logp_current);

  stage = {e3::grpo::Stage::kOptimizationAware, {1, 1, 1}, 0};
  const auto g2 = collect_group(kOrig, h.ctx, h.cfg, stage);
  CHECK(g2.group.candidates[0].reward == doctest::Approx(2.4));
  CHECK(g2.group.candidates[2].reward == doctest::Approx(2.3));

  auto bare = make_scripted_generator([](const std::string&, int n) {
    return std::vector<Completion>(n, Completion{"SELECT 1", {}, {}});
  });
  h.ctx.generator = bare.get();
  CHECK(code_of([&] { collect_group(kOrig, h.ctx, h.cfg, stage); }) == e3::ErrorCode::kMalformedResponse);
}
