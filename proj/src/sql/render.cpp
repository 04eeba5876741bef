#include <string>

#include "e3/sql_ast.hpp"

namespace e3::sql {
namespace {

bool is_operator(NodeKind k) {
  switch (k) {
    case NodeKind::kAnd:
    case NodeKind::kOr:
    case NodeKind::kNot:
    case NodeKind::kCompare:
    case NodeKind::kArith:
    case NodeKind::kNegate:
    case NodeKind::kIsNull:
    case NodeKind::kIsNotNull:
    case NodeKind::kBetween:
    case NodeKind::kNotBetween:
    case NodeKind::kInList:
    case NodeKind::kNotInList:
    case NodeKind::kInSubquery:
    case NodeKind::kNotInSubquery:
    case NodeKind::kLike:
    case NodeKind::kQuantified:
      return true;
    default:
      return false;
  }
}

bool has_tail(const AstNode& n) {
  for (const auto& c : n.children) {
    if (c.kind == NodeKind::kOrderBy || c.kind == NodeKind::kLimit ||
        c.kind == NodeKind::kOffset) {
      return true;
    }
  }
  return false;
}

std::string sqlite_type(const std::string& type) {
  const auto base = type.substr(0, type.find('('));
  if (base == "int" || base == "integer" || base == "bigint" || base == "smallint" ||
      base == "int4" || base == "int8" || base == "int2") {
    return "INTEGER";
  }
  if (base == "decimal" || base == "numeric" || base == "real" || base == "float" ||
      base == "float4" || base == "float8" || base == "double precision") {
    return "REAL";
  }
  if (base == "varchar" || base == "char" || base == "text" || base == "character" ||
      base == "character varying" || base == "date" || base == "bpchar") {
    return "TEXT";
  }
  return type;
}

class Renderer {
 public:
  explicit Renderer(Dialect d) : sqlite_(d == Dialect::kSqlite) {}

  std::string node(const AstNode& n) {
    switch (n.kind) {
      case NodeKind::kSelect:
        return select(n);
      case NodeKind::kSetOp:
        return setop(n);
      case NodeKind::kWith:
        return with(n);
      default:
        return expr(n);
    }
  }

 private:
  std::string query(const AstNode& n) { return node(n); }

  std::string tail(const AstNode& n) {
    std::string out;
    const AstNode* limit = nullptr;
    const AstNode* offset = nullptr;
    for (const auto& c : n.children) {
      if (c.kind == NodeKind::kOrderBy) out += " ORDER BY " + sort_list(c);
      if (c.kind == NodeKind::kLimit) limit = &c;
      if (c.kind == NodeKind::kOffset) offset = &c;
    }
    if (limit) {
      out += " LIMIT " + expr(limit->children.at(0));
    } else if (offset && sqlite_) {
      out += " LIMIT -1";
    }
    if (offset) out += " OFFSET " + expr(offset->children.at(0));
    return out;
  }

  std::string sort_list(const AstNode& order) {
    std::string out;
    for (std::size_t i = 0; i < order.children.size(); ++i) {
      const auto& s = order.children[i];
      if (i) out += ", ";
      out += expr(s.children.at(0)) + " " + s.value;
    }
    return out;
  }

  std::string list(const std::vector<AstNode>& items, std::size_t from = 0) {
    std::string out;
    for (std::size_t i = from; i < items.size(); ++i) {
      if (i > from) out += ", ";
      out += expr(items[i]);
    }
    return out;
  }

  std::string select(const AstNode& n) {
    std::string out = "SELECT";
    for (const auto& c : n.children) {
      switch (c.kind) {
        case NodeKind::kDistinct:
          out += " DISTINCT";
          break;
        case NodeKind::kDistinctOn:
          out += " DISTINCT ON (" + list(c.children) + ")";
          break;
        case NodeKind::kSelectList:
          out += " " + list(c.children);
          break;
        case NodeKind::kFrom: {
          out += " FROM ";
          for (std::size_t i = 0; i < c.children.size(); ++i) {
            if (i) out += ", ";
            out += table_ref(c.children[i]);
          }
          break;
        }
        case NodeKind::kWhere:
          out += " WHERE " + expr(c.children.at(0));
          break;
        case NodeKind::kGroupBy:
          out += " GROUP BY " + list(c.children);
          break;
        case NodeKind::kHaving:
          out += " HAVING " + expr(c.children.at(0));
          break;
        default:
          break;
      }
    }
    return out + tail(n);
  }

  std::string setop_operand(const AstNode& n) {
    const bool wrap = !sqlite_ && (n.kind != NodeKind::kSelect || has_tail(n));
    return wrap ? "(" + query(n) + ")" : query(n);
  }

  std::string setop(const AstNode& n) {
    return setop_operand(n.children.at(0)) + " " + n.value + " " +
           setop_operand(n.children.at(1)) + tail(n);
  }

  std::string with(const AstNode& n) {
    std::string out = "WITH ";
    if (!n.value.empty()) out += n.value + " ";
    const std::size_t ctes = n.children.size() - 1;
    for (std::size_t i = 0; i < ctes; ++i) {
      const auto& cte = n.children[i];
      if (i) out += ", ";
      out += cte.value + " AS (" + query(cte.children.at(0)) + ")";
    }
    return out + " " + query(n.children.back());
  }

  std::string table_ref(const AstNode& n) {
    switch (n.kind) {
      case NodeKind::kTable:
        return n.value;
      case NodeKind::kSubquery:
        return "(" + query(n.children.at(0)) + ")";
      case NodeKind::kAlias:
        return table_ref(n.children.at(0)) + " AS " + n.value;
      case NodeKind::kJoin: {
        const auto& right = n.children.at(1);
        std::string out = table_ref(n.children.at(0)) + " " + n.value + " JOIN ";
        out += right.kind == NodeKind::kJoin ? "(" + table_ref(right) + ")" : table_ref(right);
        if (n.children.size() > 2) {
          const auto& cond = n.children[2];
          if (cond.kind == NodeKind::kOn) {
            out += " ON " + expr(cond.children.at(0));
          } else {
            out += " USING (" + list(cond.children) + ")";
          }
        }
        return out;
      }
      default:
        return expr(n);
    }
  }

  std::string operand(const AstNode& n) {
    return is_operator(n.kind) ? "(" + expr(n) + ")" : expr(n);
  }

  std::string literal(const AstNode& n) {
    if (!sqlite_) return n.value;
    const std::string& v = n.value;
    if (v == "true") return "1";
    if (v == "false") return "0";
    for (std::string_view prefix : {"date ", "timestamp ", "time "}) {
      if (v.rfind(prefix, 0) == 0) return v.substr(prefix.size());
    }
    return v;
  }

  std::string expr(const AstNode& n) {
    const auto& ch = n.children;
    switch (n.kind) {
      case NodeKind::kSelect:
      case NodeKind::kSetOp:
      case NodeKind::kWith:
        return query(n);
      case NodeKind::kLiteral:
        return literal(n);
      case NodeKind::kIdentifier:
        return n.value;
      case NodeKind::kStar:
        return n.value.empty() ? "*" : n.value + ".*";
      case NodeKind::kAlias:
        return expr(ch.at(0)) + " AS " + n.value;
      // Both are left-associative, so a same-kind left operand needs no parens.
      case NodeKind::kAnd:
      case NodeKind::kOr: {
        const auto& left = ch.at(0);
        const char* op = n.kind == NodeKind::kAnd ? " AND " : " OR ";
        return (left.kind == n.kind ? expr(left) : operand(left)) + op + operand(ch.at(1));
      }
      case NodeKind::kNot:
        return "NOT " + operand(ch.at(0));
      case NodeKind::kCompare:
      case NodeKind::kArith:
        return operand(ch.at(0)) + " " + n.value + " " + operand(ch.at(1));
      case NodeKind::kNegate: {
        const auto& inner = ch.at(0);
        const bool bare = inner.kind == NodeKind::kIdentifier ||
                          inner.kind == NodeKind::kLiteral ||
                          inner.kind == NodeKind::kFunction;
        return bare ? "-" + expr(inner) : "-(" + expr(inner) + ")";
      }
      case NodeKind::kIsNull:
        return operand(ch.at(0)) + " IS NULL";
      case NodeKind::kIsNotNull:
        return operand(ch.at(0)) + " IS NOT NULL";
      case NodeKind::kBetween:
      case NodeKind::kNotBetween:
        return operand(ch.at(0)) +
               (n.kind == NodeKind::kBetween ? " BETWEEN " : " NOT BETWEEN ") +
               operand(ch.at(1)) + " AND " + operand(ch.at(2));
      case NodeKind::kInList:
      case NodeKind::kNotInList:
        return operand(ch.at(0)) + (n.kind == NodeKind::kInList ? " IN (" : " NOT IN (") +
               list(ch, 1) + ")";
      case NodeKind::kInSubquery:
      case NodeKind::kNotInSubquery:
        return operand(ch.at(0)) +
               (n.kind == NodeKind::kInSubquery ? " IN (" : " NOT IN (") +
               query(ch.at(1)) + ")";
      case NodeKind::kLike:
        if (sqlite_ && n.value.find("ILIKE") != std::string::npos) {
          const bool neg = n.value.rfind("NOT", 0) == 0;
          return "lower(" + expr(ch.at(0)) + (neg ? ") NOT LIKE lower(" : ") LIKE lower(") +
                 expr(ch.at(1)) + ")";
        }
        return operand(ch.at(0)) + " " + n.value + " " + operand(ch.at(1));
      case NodeKind::kExists:
        return "EXISTS (" + query(ch.at(0)) + ")";
      case NodeKind::kScalarSubquery:
        return "(" + query(ch.at(0)) + ")";
      case NodeKind::kQuantified:
        return operand(ch.at(0)) + " " + n.value + " (" + query(ch.at(1)) + ")";
      case NodeKind::kCase: {
        std::string out = "CASE";
        std::size_t i = 0;
        if (n.value == "simple") out += " " + expr(ch.at(i++));
        for (; i < ch.size(); ++i) {
          const auto& c = ch[i];
          if (c.kind == NodeKind::kWhen) {
            out += " WHEN " + expr(c.children.at(0)) + " THEN " + expr(c.children.at(1));
          } else {
            out += " ELSE " + expr(c.children.at(0));
          }
        }
        return out + " END";
      }
      case NodeKind::kCast:
        return "CAST(" + expr(ch.at(0)) + " AS " +
               (sqlite_ ? sqlite_type(n.value) : n.value) + ")";
      case NodeKind::kExtract:
        if (sqlite_) {
          const char* fmt = nullptr;
          if (n.value == "year") fmt = "%Y";
          if (n.value == "month") fmt = "%m";
          if (n.value == "day") fmt = "%d";
          if (n.value == "hour") fmt = "%H";
          if (n.value == "minute") fmt = "%M";
          if (fmt) {
            return std::string("CAST(strftime('") + fmt + "', " + expr(ch.at(0)) +
                   ") AS INTEGER)";
          }
        }
        return "EXTRACT(" + n.value + " FROM " + expr(ch.at(0)) + ")";
      case NodeKind::kFunction: {
        std::string name = n.value;
        if (sqlite_ && name == "substring") name = "substr";
        std::string out = name + "(";
        std::size_t i = 0;
        std::size_t end = ch.size();
        const AstNode* over = nullptr;
        if (end > 0 && ch[end - 1].kind == NodeKind::kOver) {
          over = &ch[end - 1];
          --end;
        }
        if (i < end && ch[i].kind == NodeKind::kDistinct) {
          out += "DISTINCT ";
          ++i;
        }
        for (std::size_t k = i; k < end; ++k) {
          if (k > i) out += ", ";
          out += expr(ch[k]);
        }
        out += ")";
        if (over) out += " OVER (" + over_clause(*over) + ")";
        return out;
      }
      case NodeKind::kTable:
      case NodeKind::kSubquery:
      case NodeKind::kJoin:
        return table_ref(n);
      default:
        // Clause nodes never appear in expression position in a parsed tree.
        return std::string(kind_name(n.kind));
    }
  }

  std::string over_clause(const AstNode& over) {
    std::string out;
    for (const auto& c : over.children) {
      if (!out.empty()) out += " ";
      if (c.kind == NodeKind::kPartitionBy) out += "PARTITION BY " + list(c.children);
      if (c.kind == NodeKind::kOrderBy) out += "ORDER BY " + sort_list(c);
    }
    return out;
  }

  bool sqlite_;
};

}  // namespace

std::string render(const AstNode& node, Dialect dialect) {
  return Renderer(dialect).node(node);
}

}  // namespace e3::sql
