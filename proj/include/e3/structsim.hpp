#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "e3/sql_ast.hpp"

namespace e3::structsim {

struct LabeledTree {
  std::string label;
  std::vector<LabeledTree> children;

  LabeledTree() = default;
  explicit LabeledTree(std::string l, std::vector<LabeledTree> c = {})
      : label(std::move(l)), children(std::move(c)) {}

  friend bool operator==(const LabeledTree&, const LabeledTree&) = default;
};

std::size_t tree_size(const LabeledTree& tree) noexcept;

struct TreeOptions {
  // Replace every literal's value with its bare kind ("Literal"), comparing
  // query skeletons instead of full trees.
  bool strip_literals = false;
};

LabeledTree to_labeled_tree(const sql::QueryAst& ast, TreeOptions options = {});
LabeledTree to_labeled_tree(const sql::AstNode& node, TreeOptions options = {});

// Which root-leaf path the decomposition follows for every subtree pair.
// kOptimal is the all-path cost-minimizing strategy; the fixed variants exist
// so tests can exercise every single-path function on its own.
enum class PathStrategy : std::uint8_t {
  kOptimal,
  kLeftInFirst,
  kRightInFirst,
  kHeavyInFirst,
  kLeftInSecond,
  kRightInSecond,
  kHeavyInSecond,
  kRandom,
};

struct TedOptions {
  PathStrategy strategy = PathStrategy::kOptimal;
  std::uint64_t seed = 0;  // kRandom only
};

// Ordered labeled tree edit distance with unit insert/delete/rename costs.
std::int64_t ted(const LabeledTree& a, const LabeledTree& b, TedOptions options = {});

// 1 - TED / max(|a|, |b|), clamped to [0, 1].
double struct_similarity(const LabeledTree& a, const LabeledTree& b);
double struct_similarity(const sql::QueryAst& q, const sql::QueryAst& qi,
                         TreeOptions options = {});

}  // namespace e3::structsim
