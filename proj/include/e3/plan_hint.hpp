#pragma once

// Plan trees, bottleneck tagging and the execution-hint text.
//
// Hint grammar (one line per plan node, preorder, two spaces per depth):
//
//   <Node Type>[ rel=<relation>] (cost=<c> rows=<r>[ actual_rows=<n>][ removed=<n>])
//
// followed by one line per bottleneck tag:
//
//   -- BOTTLENECK: <Kind> at <path> (<magnitude>)
//
// <path> lists child indices from the root ("/" is the root, "/0/1" the
// second child of the first child). Numbers print as integers when integral,
// otherwise with at most four decimals, trailing zeros trimmed.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "e3/db.hpp"

namespace e3::plan {

struct PlanNode {
  std::string op;  // PostgreSQL "Node Type"
  double est_cost = 0;
  double est_rows = 0;
  std::optional<double> actual_time_ms;
  std::optional<std::int64_t> actual_rows;
  std::optional<std::int64_t> rows_removed_by_filter;
  std::optional<std::string> relation;
  std::optional<std::string> index_used;
  std::vector<PlanNode> children;

  friend bool operator==(const PlanNode&, const PlanNode&) = default;
};

// Accepts the EXPLAIN (FORMAT JSON) array, a {"Plan": ...} object or a bare
// node. Runtime counters are read only when doc.analyzed, and are then
// required on every node. Throws PlanFormat.
PlanNode parse_plan(const db::PlanDocument& doc);

std::size_t plan_size(const PlanNode& root) noexcept;

std::string linearize(const PlanNode& root);

enum class BottleneckKind { kSeqScanLarge, kUnindexedJoin, kHeavyPostFilter, kNestedLoopLarge };

std::string_view bottleneck_name(BottleneckKind kind) noexcept;

struct Bottleneck {
  BottleneckKind kind;
  std::vector<int> node_path;
  double magnitude = 0;

  friend bool operator==(const Bottleneck&, const Bottleneck&) = default;
};

struct BottleneckThresholds {
  double filter_ratio = 0.9;
  double seq_scan_rows = 100000;
  double join_rows = 100000;
  double nested_loop_inner_rows = 100000;
};

// Tags in preorder; per node: HeavyPostFilter, SeqScanLarge, NestedLoopLarge,
// then UnindexedJoin for each offending child of a join.
std::vector<Bottleneck> tag_bottlenecks(const PlanNode& root,
                                        const BottleneckThresholds& thresholds = {});

struct ExecutionHint {
  std::string hint_text;
  std::vector<Bottleneck> bottlenecks;
  bool source_analyzed = false;
};

// source_analyzed is true iff the plan carries runtime counters.
ExecutionHint build_hint(const PlanNode& root, const BottleneckThresholds& thresholds = {});

std::string format_number(double v);
std::string format_path(const std::vector<int>& path);
const PlanNode* resolve_path(const PlanNode& root, const std::vector<int>& path) noexcept;

}  // namespace e3::plan
