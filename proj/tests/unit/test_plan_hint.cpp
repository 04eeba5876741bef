#include <random>
#include <set>
#include <string>

#include "doctest.h"
#include "e3/db.hpp"
#include "e3/error.hpp"
#include "e3/plan_hint.hpp"

using namespace e3::plan;
using e3::db::PlanDocument;

namespace {

const char* kHashJoin = R"([{"Plan": {
  "Node Type": "Hash Join", "Total Cost": 45.5, "Plan Rows": 1000,
  "Plans": [
    {"Node Type": "Seq Scan", "Relation Name": "orders", "Total Cost": 20.0, "Plan Rows": 1000},
    {"Node Type": "Seq Scan", "Relation Name": "customer", "Total Cost": 4.25, "Plan Rows": 200}
  ]}}])";

const char* kHashJoinAnalyzed = R"([{"Plan": {
  "Node Type": "Hash Join", "Total Cost": 45.5, "Plan Rows": 1000, "Actual Rows": 990,
  "Actual Total Time": 1.5,
  "Plans": [
    {"Node Type": "Seq Scan", "Relation Name": "orders", "Total Cost": 20.0, "Plan Rows": 1000,
     "Actual Rows": 1000, "Rows Removed by Filter": 0},
    {"Node Type": "Seq Scan", "Relation Name": "customer", "Total Cost": 4.25, "Plan Rows": 200,
     "Actual Rows": 200}
  ]}, "Execution Time": 1.7}])";

PlanNode leaf(const std::string& op, double rows, std::optional<std::string> rel = {}) {
  PlanNode n;
  n.op = op;
  n.est_rows = rows;
  n.est_cost = rows / 100.0;
  n.relation = std::move(rel);
  return n;
}

PlanNode inner(const std::string& op, std::vector<PlanNode> children) {
  PlanNode n;
  n.op = op;
  n.est_cost = 1;
  n.est_rows = 1;
  n.children = std::move(children);
  return n;
}

PlanNode random_plan(std::mt19937_64& rng, int depth) {
  static const char* ops[] = {"Seq Scan", "Hash Join", "Sort", "Nested Loop", "Aggregate"};
  PlanNode n = leaf(ops[rng() % 5], static_cast<double>(rng() % 5));
  const int kids = depth > 3 ? 0 : static_cast<int>(rng() % 3);
  for (int i = 0; i < kids; ++i) n.children.push_back(random_plan(rng, depth + 1));
  return n;
}

}  // namespace

TEST_CASE("parse a two-level scripted plan") {
  const auto root = parse_plan({kHashJoin, false});
  CHECK(root.op == "Hash Join");
  REQUIRE(root.children.size() == 2);
  CHECK(root.children[0].relation == "orders");
  CHECK(root.children[1].est_cost == 4.25);
  CHECK_FALSE(root.actual_rows);
}

TEST_CASE("analyzed plans populate actual rows on every node") {
  const auto root = parse_plan({kHashJoinAnalyzed, true});
  CHECK(root.actual_rows == 990);
  CHECK(root.children[0].actual_rows == 1000);
  CHECK(root.children[1].actual_rows == 200);
  CHECK(root.actual_time_ms == 1.5);
  // an analyzed document missing a counter is malformed
  CHECK_THROWS_AS(parse_plan({kHashJoin, true}), e3::Error);
}

TEST_CASE("malformed payloads raise PlanFormat") {
  const std::string full = kHashJoin;
  for (const std::string bad : {full.substr(0, full.size() / 2), std::string("[]"),
                                std::string(R"({"Plan": {"Total Cost": 1, "Plan Rows": 1}})"),
                                std::string(R"({"Node Type": "X", "Total Cost": -1, "Plan Rows": 1})")}) {
    try {
      parse_plan({bad, false});
      FAIL("expected PlanFormat for " << bad);
    } catch (const e3::Error& e) {
      CHECK(e.code() == e3::ErrorCode::kPlanFormat);
    }
  }
}

TEST_CASE("linearize: single node, children, depth") {
  CHECK(linearize(leaf("Seq Scan", 10, "t")) == "Seq Scan rel=t (cost=0.1 rows=10)");

  const auto root = parse_plan({kHashJoin, false});
  CHECK(linearize(root) ==
        "Hash Join (cost=45.5 rows=1000)\n"
        "  Seq Scan rel=orders (cost=20 rows=1000)\n"
        "  Seq Scan rel=customer (cost=4.25 rows=200)");

  const auto analyzed = parse_plan({kHashJoinAnalyzed, true});
  CHECK(linearize(analyzed) ==
        "Hash Join (cost=45.5 rows=1000 actual_rows=990)\n"
        "  Seq Scan rel=orders (cost=20 rows=1000 actual_rows=1000 removed=0)\n"
        "  Seq Scan rel=customer (cost=4.25 rows=200 actual_rows=200)");

  const auto deep = inner("Limit", {inner("Sort", {inner("Hash", {leaf("Seq Scan", 5, "t")})})});
  const auto text = linearize(deep);
  std::size_t max_indent = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    const auto line = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    max_indent = std::max(max_indent, line.find_first_not_of(' '));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  CHECK(max_indent == 6);
}

TEST_CASE("linearize is deterministic and injective on random plans") {
  std::mt19937_64 rng(17);
  std::vector<PlanNode> plans;
  for (int i = 0; i < 300; ++i) plans.push_back(random_plan(rng, 0));
  for (std::size_t i = 0; i < plans.size(); ++i) {
    CHECK(linearize(plans[i]) == linearize(plans[i]));
    for (std::size_t j = i + 1; j < plans.size(); ++j) {
      if (!(plans[i] == plans[j])) CHECK(linearize(plans[i]) != linearize(plans[j]));
    }
  }
}

TEST_CASE("number formatting") {
  CHECK(format_number(100000) == "100000");
  CHECK(format_number(0.99) == "0.99");
  CHECK(format_number(1.23456) == "1.2346");
  CHECK(format_number(2.5) == "2.5");
  CHECK(format_path({}) == "/");
  CHECK(format_path({0, 1}) == "/0/1");
}

TEST_CASE("bottleneck rules") {
  BottleneckThresholds small;
  small.seq_scan_rows = 10000;
  CHECK(tag_bottlenecks(leaf("Seq Scan", 10, "t"), small).empty());

  PlanNode filter = leaf("Seq Scan", 1000, "orders");
  filter.actual_rows = 1000;
  filter.rows_removed_by_filter = 99000;
  const auto tags = tag_bottlenecks(filter);
  REQUIRE(tags.size() == 1);
  CHECK(tags[0].kind == BottleneckKind::kHeavyPostFilter);
  CHECK(tags[0].magnitude == doctest::Approx(0.99));
  CHECK(tags[0].node_path.empty());

  auto nl = inner("Nested Loop", {leaf("Index Scan", 10, "a"), leaf("Seq Scan", 1e6, "b")});
  nl.children[0].index_used = "a_pkey";
  const auto nl_tags = tag_bottlenecks(nl);
  bool nested = false;
  for (const auto& t : nl_tags) {
    if (t.kind == BottleneckKind::kNestedLoopLarge) {
      nested = true;
      CHECK(t.node_path.empty());
      CHECK(t.magnitude == 1e6);
    }
    CHECK(resolve_path(nl, t.node_path) != nullptr);
  }
  CHECK(nested);
  // inner Seq Scan is also large and unindexed
  CHECK(nl_tags.size() == 3);

  // join input through a Hash wrapper
  auto hj = inner("Hash Join", {leaf("Index Scan", 200000, "x"),
                                inner("Hash", {leaf("Seq Scan", 200000, "y")})});
  hj.children[0].index_used = "x_idx";
  const auto hj_tags = tag_bottlenecks(hj);
  REQUIRE(hj_tags.size() == 2);
  CHECK(hj_tags[0].kind == BottleneckKind::kUnindexedJoin);
  CHECK(hj_tags[0].node_path == std::vector<int>{1, 0});
  CHECK(hj_tags[1].kind == BottleneckKind::kSeqScanLarge);
  CHECK(hj_tags[1].node_path == std::vector<int>{1, 0});
}

TEST_CASE("build_hint appends one line per tag and carries the analyzed flag") {
  const auto plain = parse_plan({kHashJoin, false});
  const auto h0 = build_hint(plain);
  CHECK(h0.hint_text == linearize(plain));
  CHECK(h0.bottlenecks.empty());
  CHECK_FALSE(h0.source_analyzed);

  PlanNode filter = leaf("Seq Scan", 1000, "orders");
  filter.actual_rows = 1000;
  filter.rows_removed_by_filter = 99000;
  const auto h1 = build_hint(filter);
  CHECK(h1.source_analyzed);
  CHECK(h1.hint_text ==
        "Seq Scan rel=orders (cost=10 rows=1000 actual_rows=1000 removed=99000)\n"
        "-- BOTTLENECK: HeavyPostFilter at / (0.99)");
  // line count = nodes + tags
  const auto lines = std::count(h1.hint_text.begin(), h1.hint_text.end(), '\n') + 1;
  CHECK(static_cast<std::size_t>(lines) == plan_size(filter) + h1.bottlenecks.size());

  CHECK(build_hint(parse_plan({kHashJoinAnalyzed, true})).source_analyzed);
}

TEST_CASE("stub plans round-trip through the hint builder") {
  auto db = e3::db::open_database({std::string("stub:") + E3_FIXTURE_DIR + "/stubdb", 300});
  const auto doc = db->explain("SELECT o_id, o_total FROM orders WHERE o_total > 850", true);
  const auto hint = build_hint(parse_plan(doc));
  CHECK(hint.source_analyzed);
  REQUIRE(hint.bottlenecks.size() == 1);
  CHECK(hint.bottlenecks[0].kind == BottleneckKind::kHeavyPostFilter);
  CHECK(hint.hint_text.find("-- BOTTLENECK: HeavyPostFilter at / (0.945)") != std::string::npos);
}
