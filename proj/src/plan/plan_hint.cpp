#include <cmath>
#include <cstdio>

#include "e3/error.hpp"
#include "e3/plan_hint.hpp"
#include "json.hpp"

namespace e3::plan {
namespace {

using nlohmann::json;

double number_field(const json& node, const char* key, bool required) {
  auto it = node.find(key);
  if (it == node.end()) {
    if (required) fail(ErrorCode::kPlanFormat, std::string("plan node lacks \"") + key + "\"");
    return 0;
  }
  if (!it->is_number()) fail(ErrorCode::kPlanFormat, std::string("non-numeric \"") + key + "\"");
  const double v = it->get<double>();
  if (!(v >= 0) || !std::isfinite(v)) {
    fail(ErrorCode::kPlanFormat, std::string("negative or non-finite \"") + key + "\"");
  }
  return v;
}

std::optional<std::string> string_field(const json& node, const char* key) {
  auto it = node.find(key);
  if (it == node.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

PlanNode convert(const json& node, bool analyzed, int depth) {
  if (depth > 1000) fail(ErrorCode::kPlanFormat, "plan nesting too deep");
  if (!node.is_object()) fail(ErrorCode::kPlanFormat, "plan node is not an object");
  PlanNode out;
  auto type = string_field(node, "Node Type");
  if (!type) fail(ErrorCode::kPlanFormat, "plan node lacks \"Node Type\"");
  out.op = *type;
  out.est_cost = number_field(node, "Total Cost", true);
  out.est_rows = number_field(node, "Plan Rows", true);
  if (analyzed) {
    out.actual_rows = std::llround(number_field(node, "Actual Rows", true));
    if (node.contains("Actual Total Time")) {
      out.actual_time_ms = number_field(node, "Actual Total Time", true);
    }
    if (node.contains("Rows Removed by Filter")) {
      out.rows_removed_by_filter = std::llround(number_field(node, "Rows Removed by Filter", true));
    }
  }
  out.relation = string_field(node, "Relation Name");
  if (!out.relation) out.relation = string_field(node, "CTE Name");
  out.index_used = string_field(node, "Index Name");
  if (auto it = node.find("Plans"); it != node.end()) {
    if (!it->is_array()) fail(ErrorCode::kPlanFormat, "\"Plans\" is not an array");
    for (const auto& c : *it) out.children.push_back(convert(c, analyzed, depth + 1));
  }
  return out;
}

void linearize_into(const PlanNode& n, int depth, std::string& out) {
  if (!out.empty()) out += '\n';
  out.append(static_cast<std::size_t>(depth) * 2, ' ');
  out += n.op;
  if (n.relation) out += " rel=" + *n.relation;
  out += " (cost=" + format_number(n.est_cost) + " rows=" + format_number(n.est_rows);
  if (n.actual_rows) out += " actual_rows=" + std::to_string(*n.actual_rows);
  if (n.rows_removed_by_filter) out += " removed=" + std::to_string(*n.rows_removed_by_filter);
  out += ')';
  for (const auto& c : n.children) linearize_into(c, depth + 1, out);
}

bool is_join(const std::string& op) {
  return op == "Nested Loop" || op == "Hash Join" || op == "Merge Join";
}

// Looks through single-input wrappers (Hash, Materialize, Sort, ...) to the
// scan feeding a join input.
const PlanNode* feeding_scan(const PlanNode& n, std::vector<int>& path) {
  const PlanNode* cur = &n;
  while (cur->op.find("Scan") == std::string::npos && cur->children.size() == 1) {
    path.push_back(0);
    cur = &cur->children[0];
  }
  return cur->op.find("Scan") != std::string::npos ? cur : nullptr;
}

void tag(const PlanNode& n, std::vector<int>& path, const BottleneckThresholds& t,
         std::vector<Bottleneck>& out) {
  if (n.rows_removed_by_filter) {
    const double removed = static_cast<double>(*n.rows_removed_by_filter);
    const double kept = n.actual_rows ? static_cast<double>(*n.actual_rows) : n.est_rows;
    const double ratio = removed / std::max(1.0, kept + removed);
    if (ratio >= t.filter_ratio) out.push_back({BottleneckKind::kHeavyPostFilter, path, ratio});
  }
  if (n.op == "Seq Scan" && n.est_rows >= t.seq_scan_rows) {
    out.push_back({BottleneckKind::kSeqScanLarge, path, n.est_rows});
  }
  if (n.op == "Nested Loop" && n.children.size() >= 2 &&
      n.children[1].est_rows >= t.nested_loop_inner_rows) {
    out.push_back({BottleneckKind::kNestedLoopLarge, path, n.children[1].est_rows});
  }
  if (is_join(n.op)) {
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      std::vector<int> scan_path = path;
      scan_path.push_back(static_cast<int>(i));
      const PlanNode* scan = feeding_scan(n.children[i], scan_path);
      if (scan && !scan->index_used && scan->est_rows >= t.join_rows) {
        out.push_back({BottleneckKind::kUnindexedJoin, scan_path, scan->est_rows});
      }
    }
  }
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    path.push_back(static_cast<int>(i));
    tag(n.children[i], path, t, out);
    path.pop_back();
  }
}

}  // namespace

PlanNode parse_plan(const db::PlanDocument& doc) {
  json j;
  try {
    j = json::parse(doc.payload);
  } catch (const json::exception& e) {
    fail(ErrorCode::kPlanFormat, std::string("plan payload is not valid JSON: ") + e.what());
  }
  if (j.is_array()) {
    if (j.size() != 1) fail(ErrorCode::kPlanFormat, "plan document must hold exactly one plan");
    j = j[0];
  }
  if (j.is_object() && j.contains("Plan")) j = j["Plan"];
  try {
    return convert(j, doc.analyzed, 0);
  } catch (const json::exception& e) {
    fail(ErrorCode::kPlanFormat, e.what());
  }
}

std::size_t plan_size(const PlanNode& root) noexcept {
  std::size_t n = 1;
  for (const auto& c : root.children) n += plan_size(c);
  return n;
}

std::string format_number(double v) {
  if (std::isfinite(v) && std::floor(v) == v && std::fabs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s = buf;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

std::string format_path(const std::vector<int>& path) {
  if (path.empty()) return "/";
  std::string out;
  for (int i : path) out += "/" + std::to_string(i);
  return out;
}

const PlanNode* resolve_path(const PlanNode& root, const std::vector<int>& path) noexcept {
  const PlanNode* cur = &root;
  for (int i : path) {
    if (i < 0 || static_cast<std::size_t>(i) >= cur->children.size()) return nullptr;
    cur = &cur->children[static_cast<std::size_t>(i)];
  }
  return cur;
}

std::string linearize(const PlanNode& root) {
  std::string out;
  linearize_into(root, 0, out);
  return out;
}

std::string_view bottleneck_name(BottleneckKind kind) noexcept {
  switch (kind) {
    case BottleneckKind::kSeqScanLarge: return "SeqScanLarge";
    case BottleneckKind::kUnindexedJoin: return "UnindexedJoin";
    case BottleneckKind::kHeavyPostFilter: return "HeavyPostFilter";
    case BottleneckKind::kNestedLoopLarge: return "NestedLoopLarge";
  }
  return "Unknown";
}

std::vector<Bottleneck> tag_bottlenecks(const PlanNode& root, const BottleneckThresholds& t) {
  std::vector<Bottleneck> out;
  std::vector<int> path;
  tag(root, path, t, out);
  return out;
}

ExecutionHint build_hint(const PlanNode& root, const BottleneckThresholds& thresholds) {
  ExecutionHint hint;
  hint.hint_text = linearize(root);
  hint.bottlenecks = tag_bottlenecks(root, thresholds);
  hint.source_analyzed = root.actual_rows.has_value();
  for (const auto& b : hint.bottlenecks) {
    hint.hint_text += "\n-- BOTTLENECK: " + std::string(bottleneck_name(b.kind)) + " at " +
                      format_path(b.node_path) + " (" + format_number(b.magnitude) + ")";
  }
  return hint;
}

}  // namespace e3::plan
