#include <cstdio>
#include <vector>

#include "e3/sql_ast.hpp"

namespace e3::sql {

std::string_view kind_name(NodeKind kind) noexcept {
  switch (kind) {
    case NodeKind::kSelect: return "Select";
    case NodeKind::kSetOp: return "SetOp";
    case NodeKind::kWith: return "With";
    case NodeKind::kCte: return "Cte";
    case NodeKind::kDistinct: return "Distinct";
    case NodeKind::kDistinctOn: return "DistinctOn";
    case NodeKind::kSelectList: return "SelectList";
    case NodeKind::kFrom: return "From";
    case NodeKind::kWhere: return "Where";
    case NodeKind::kGroupBy: return "GroupBy";
    case NodeKind::kHaving: return "Having";
    case NodeKind::kOrderBy: return "OrderBy";
    case NodeKind::kLimit: return "Limit";
    case NodeKind::kOffset: return "Offset";
    case NodeKind::kOn: return "On";
    case NodeKind::kUsing: return "Using";
    case NodeKind::kPartitionBy: return "PartitionBy";
    case NodeKind::kOver: return "Over";
    case NodeKind::kWhen: return "When";
    case NodeKind::kElse: return "Else";
    case NodeKind::kTable: return "Table";
    case NodeKind::kSubquery: return "Subquery";
    case NodeKind::kAlias: return "Alias";
    case NodeKind::kJoin: return "Join";
    case NodeKind::kSort: return "Sort";
    case NodeKind::kAnd: return "And";
    case NodeKind::kOr: return "Or";
    case NodeKind::kNot: return "Not";
    case NodeKind::kCompare: return "Compare";
    case NodeKind::kArith: return "Arith";
    case NodeKind::kNegate: return "Negate";
    case NodeKind::kIsNull: return "IsNull";
    case NodeKind::kIsNotNull: return "IsNotNull";
    case NodeKind::kBetween: return "Between";
    case NodeKind::kNotBetween: return "NotBetween";
    case NodeKind::kInList: return "InList";
    case NodeKind::kNotInList: return "NotInList";
    case NodeKind::kInSubquery: return "InSubquery";
    case NodeKind::kNotInSubquery: return "NotInSubquery";
    case NodeKind::kLike: return "Like";
    case NodeKind::kExists: return "Exists";
    case NodeKind::kScalarSubquery: return "ScalarSubquery";
    case NodeKind::kQuantified: return "Quantified";
    case NodeKind::kCase: return "Case";
    case NodeKind::kCast: return "Cast";
    case NodeKind::kExtract: return "Extract";
    case NodeKind::kFunction: return "Function";
    case NodeKind::kIdentifier: return "Identifier";
    case NodeKind::kStar: return "Star";
    case NodeKind::kLiteral: return "Literal";
  }
  return "Unknown";
}

std::string AstNode::label() const {
  std::string out(kind_name(kind));
  if (!value.empty()) {
    out += ':';
    out += value;
  }
  return out;
}

std::size_t node_count(const AstNode& node) noexcept {
  std::size_t count = 0;
  std::vector<const AstNode*> stack{&node};
  while (!stack.empty()) {
    const AstNode* n = stack.back();
    stack.pop_back();
    ++count;
    for (const auto& c : n->children) stack.push_back(&c);
  }
  return count;
}

bool has_order_dependence(const QueryAst& ast) noexcept {
  const AstNode* block = &ast.root;
  // WITH: the outermost block is the body, always the last child.
  while (block->kind == NodeKind::kWith && !block->children.empty()) {
    block = &block->children.back();
  }
  for (const auto& c : block->children) {
    if (c.kind == NodeKind::kOrderBy) return true;
  }
  return false;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex16(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string fingerprint(const QueryAst& ast) {
  return to_hex16(fnv1a64(render(ast.root, Dialect::kCanonical)));
}

std::string fingerprint_sql(std::string_view text) {
  return fingerprint(parse_sql(text));
}

}  // namespace e3::sql
