#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "e3/sql_ast.hpp"
#include "e3/structsim.hpp"
#include "oracles/zhang_shasha.hpp"

using e3::structsim::LabeledTree;
using e3::structsim::PathStrategy;
using e3::structsim::TedOptions;

namespace {

LabeledTree random_tree(std::mt19937_64& rng, int nodes, int alphabet) {
  // random attachment in preorder: node k picks a parent on the rightmost path
  std::uniform_int_distribution<int> lab(0, alphabet - 1);
  LabeledTree root(std::string(1, static_cast<char>('a' + lab(rng))));
  std::vector<LabeledTree*> rightmost{&root};
  for (int k = 1; k < nodes; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, rightmost.size() - 1);
    const std::size_t depth = pick(rng);
    rightmost.resize(depth + 1);
    LabeledTree* parent = rightmost.back();
    parent->children.emplace_back(std::string(1, static_cast<char>('a' + lab(rng))));
    rightmost.push_back(&parent->children.back());
  }
  return root;
}

const PathStrategy kAllStrategies[] = {
    PathStrategy::kOptimal,       PathStrategy::kLeftInFirst,
    PathStrategy::kRightInFirst,  PathStrategy::kHeavyInFirst,
    PathStrategy::kLeftInSecond,  PathStrategy::kRightInSecond,
    PathStrategy::kHeavyInSecond, PathStrategy::kRandom,
};

}  // namespace

TEST_CASE("trivial distances") {
  const LabeledTree a("A"), b("B");
  CHECK(e3::structsim::ted(a, a) == 0);
  CHECK(e3::structsim::ted(a, b) == 1);
  const LabeledTree t("f", {LabeledTree("a"), LabeledTree("b", {LabeledTree("c")})});
  CHECK(e3::structsim::ted(t, t) == 0);
  CHECK(e3::structsim::ted(t, LabeledTree("f")) == 3);
}

TEST_CASE("oracle agreement on small random trees, every path strategy") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> size(1, 6);
  for (int trial = 0; trial < 400; ++trial) {
    const auto a = random_tree(rng, size(rng), 3);
    const auto b = random_tree(rng, size(rng), 3);
    const auto expected = oracle::zhang_shasha(a, b);
    for (auto s : kAllStrategies) {
      const auto got = e3::structsim::ted(a, b, TedOptions{s, static_cast<std::uint64_t>(trial)});
      REQUIRE_MESSAGE(got == expected, "trial " << trial << " strategy "
                                                << static_cast<int>(s));
    }
  }
}

TEST_CASE("oracle agreement on larger random trees") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> size(1, 40);
  for (int trial = 0; trial < 150; ++trial) {
    const auto a = random_tree(rng, size(rng), 4);
    const auto b = random_tree(rng, size(rng), 4);
    const auto expected = oracle::zhang_shasha(a, b);
    for (auto s : kAllStrategies) {
      REQUIRE(e3::structsim::ted(a, b, TedOptions{s, 3}) == expected);
    }
  }
}

TEST_CASE("metric properties") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> size(1, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_tree(rng, size(rng), 3);
    const auto b = random_tree(rng, size(rng), 3);
    const auto c = random_tree(rng, size(rng), 3);
    const auto ab = e3::structsim::ted(a, b);
    CHECK(ab == e3::structsim::ted(b, a));
    CHECK(e3::structsim::ted(a, a) == 0);
    CHECK(ab <= static_cast<std::int64_t>(e3::structsim::tree_size(a) +
                                          e3::structsim::tree_size(b)));
    CHECK(e3::structsim::ted(a, c) <= ab + e3::structsim::ted(b, c));
    const double sim = e3::structsim::struct_similarity(a, b);
    CHECK(sim >= 0.0);
    CHECK(sim <= 1.0);
  }
}

TEST_CASE("struct_similarity formula") {
  CHECK(e3::structsim::struct_similarity(LabeledTree("A"), LabeledTree("B")) == 0.0);
  // 3 nodes vs 5 nodes, the 5-node tree extends the 3-node one by 2 leaves
  const LabeledTree small("r", {LabeledTree("x"), LabeledTree("y")});
  const LabeledTree big("r", {LabeledTree("x", {LabeledTree("p")}), LabeledTree("y"),
                              LabeledTree("z")});
  REQUIRE(oracle::zhang_shasha(small, big) == 2);
  CHECK(e3::structsim::struct_similarity(small, big) == doctest::Approx(0.6));
}

TEST_CASE("AST conversion preserves structure and labels") {
  const auto ast = e3::sql::parse_sql("SELECT A, b FROM T WHERE a = 3");
  const auto tree = e3::structsim::to_labeled_tree(ast);
  CHECK(e3::structsim::tree_size(tree) == e3::sql::node_count(ast));
  CHECK(tree.label == "Select");
  CHECK(tree.children[0].children[0].label == "Identifier:a");
  const auto one = e3::structsim::to_labeled_tree(e3::sql::AstNode(e3::sql::NodeKind::kStar));
  CHECK(e3::structsim::tree_size(one) == 1);

  const auto stripped = e3::structsim::to_labeled_tree(ast, {.strip_literals = true});
  CHECK(stripped.children.back().children[0].children[1].label == "Literal");
  CHECK(e3::structsim::struct_similarity(ast, e3::sql::parse_sql("SELECT a, b FROM t WHERE a = 4"),
                                         {.strip_literals = true}) == 1.0);
}

TEST_CASE("self-similarity of parsed queries is one") {
  for (const char* q : {"SELECT 1", "SELECT a FROM t JOIN u ON t.x = u.y WHERE t.z > 1",
                        "SELECT count(*) FROM t GROUP BY a HAVING sum(b) > 3"}) {
    const auto ast = e3::sql::parse_sql(q);
    CHECK(e3::structsim::struct_similarity(ast, ast) == 1.0);
  }
}
