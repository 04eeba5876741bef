#pragma once

// Operator-level SQL syntax trees.
//
// The grammar-kind vocabulary below is closed: every AstNode carries one
// NodeKind plus an optional value (identifier path, literal text, operator
// symbol, join type, ...). Tree edit distance compares `label()`, which is
// "<Kind>" or "<Kind>:<value>", so the vocabulary is part of the similarity
// contract. Changing it changes every structural-similarity score.
//
// Levels and kinds (children in the listed order, optional ones omitted when
// absent):
//
//   statement   Select     [Distinct|DistinctOn] SelectList [From] [Where]
//                          [GroupBy] [Having] [OrderBy] [Limit] [Offset]
//               SetOp:<UNION|UNION ALL|INTERSECT|INTERSECT ALL|EXCEPT|
//                      EXCEPT ALL>  left right [OrderBy] [Limit] [Offset]
//               With:[RECURSIVE]  Cte... body
//               Cte:<name>  body
//   clause      Distinct, DistinctOn (exprs), SelectList (items), From
//               (table refs), Where (expr), GroupBy (exprs), Having (expr),
//               OrderBy (Sort...), Limit (expr), Offset (expr),
//               On (expr), Using (Identifier...), PartitionBy (exprs),
//               Over [PartitionBy] [OrderBy], When (cond result), Else (expr)
//   operator    Table:<name>, Subquery (query), Alias:<name> (aliased item),
//               Join:<[NATURAL ]INNER|LEFT|RIGHT|FULL|CROSS> left right
//               [On|Using], Sort:<ASC|DESC>[ NULLS FIRST|LAST] (expr)
//   expression  And, Or, Not, Compare:<op>, Arith:<+|-|*|/|%|||>, Negate,
//               IsNull, IsNotNull, Between, NotBetween, InList, NotInList,
//               InSubquery, NotInSubquery, Like:<[NOT ]LIKE|[NOT ]ILIKE>,
//               Exists, ScalarSubquery, Quantified:<op ANY|op ALL>,
//               Case[:simple], Cast:<type>, Extract:<field>,
//               Function:<name> ([Distinct] args... [Over])
//   identifier  Identifier:<folded dotted path>, Star[:<qualifier>]
//   literal     Literal:<verbatim text>  (numbers, 'strings', NULL, true,
//               false, date '...', timestamp '...', interval '...' [unit])
//
// Unquoted identifiers are folded to lower case; quoted identifiers keep
// their quotes unless they are already in folded form.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace e3::sql {

enum class NodeKind : std::uint8_t {
  kSelect,
  kSetOp,
  kWith,
  kCte,
  kDistinct,
  kDistinctOn,
  kSelectList,
  kFrom,
  kWhere,
  kGroupBy,
  kHaving,
  kOrderBy,
  kLimit,
  kOffset,
  kOn,
  kUsing,
  kPartitionBy,
  kOver,
  kWhen,
  kElse,
  kTable,
  kSubquery,
  kAlias,
  kJoin,
  kSort,
  kAnd,
  kOr,
  kNot,
  kCompare,
  kArith,
  kNegate,
  kIsNull,
  kIsNotNull,
  kBetween,
  kNotBetween,
  kInList,
  kNotInList,
  kInSubquery,
  kNotInSubquery,
  kLike,
  kExists,
  kScalarSubquery,
  kQuantified,
  kCase,
  kCast,
  kExtract,
  kFunction,
  kIdentifier,
  kStar,
  kLiteral,
};

std::string_view kind_name(NodeKind kind) noexcept;

struct AstNode {
  NodeKind kind = NodeKind::kLiteral;
  std::string value;
  std::vector<AstNode> children;

  AstNode() = default;
  AstNode(NodeKind k, std::string v = {}, std::vector<AstNode> c = {})
      : kind(k), value(std::move(v)), children(std::move(c)) {}

  // "<Kind>" or "<Kind>:<value>".
  std::string label() const;

  friend bool operator==(const AstNode&, const AstNode&) = default;
};

struct QueryAst {
  AstNode root;
  std::string source_text;
};

// Parses exactly one statement (an optional trailing ';' is allowed).
// Throws e3::ParseError with the byte offset of the offending token.
QueryAst parse_sql(std::string_view text);

std::size_t node_count(const AstNode& node) noexcept;
inline std::size_t node_count(const QueryAst& ast) noexcept {
  return node_count(ast.root);
}

// True iff the outermost query block carries an ORDER BY.
bool has_order_dependence(const QueryAst& ast) noexcept;

enum class Dialect {
  kCanonical,  // PostgreSQL-flavoured pretty form; the round-trip target
  kSqlite,     // best-effort translation used by the stub DBMS
};

std::string render(const AstNode& node, Dialect dialect = Dialect::kCanonical);
inline std::string render(const QueryAst& ast,
                          Dialect dialect = Dialect::kCanonical) {
  return render(ast.root, dialect);
}

// 16 hex digits; FNV-1a over the canonical rendering. Whitespace, keyword
// case and redundant parentheses do not change the fingerprint.
std::string fingerprint(const QueryAst& ast);
std::string fingerprint_sql(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::string to_hex16(std::uint64_t value);

}  // namespace e3::sql
