#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "e3/error.hpp"
#include "e3/sql_ast.hpp"
#include "lexer.hpp"

namespace e3::sql {
namespace {

using detail::Token;
using detail::TokenType;

constexpr std::array<std::string_view, 50> kReserved = {
    "select", "from",    "where",  "group",  "by",        "having",  "order",
    "limit",  "offset",  "union",  "intersect", "except", "all",     "distinct",
    "on",     "join",    "inner",  "left",   "right",     "full",    "outer",
    "cross",  "natural", "using",  "as",     "and",       "or",      "not",
    "in",     "is",      "null",   "between", "like",     "ilike",   "exists",
    "case",   "when",    "then",   "else",   "end",       "cast",    "with",
    "asc",    "desc",    "true",   "false",  "any",       "some",    "fetch",
    "window"};

bool is_reserved(std::string_view word) {
  return std::find(kReserved.begin(), kReserved.end(), word) != kReserved.end();
}

constexpr std::array<std::string_view, 12> kIntervalUnits = {
    "year", "years", "month", "months", "day", "days",
    "hour", "hours", "minute", "minutes", "second", "seconds"};

bool is_interval_unit(std::string_view word) {
  return std::find(kIntervalUnits.begin(), kIntervalUnits.end(), word) !=
         kIntervalUnits.end();
}

bool is_simple_folded(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::islower(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (!(std::islower(u) || std::isdigit(u) || c == '_' || c == '$')) return false;
  }
  return !is_reserved(s);
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  AstNode statement() {
    const Token& first = peek();
    if (!(is_kw(first, "select") || is_kw(first, "with") || is_sym(first, "("))) {
      throw ParseError(first.offset, "expected SELECT or WITH");
    }
    AstNode root = query();
    if (is_sym(peek(), ";")) advance();
    if (peek().type != TokenType::kEnd) {
      throw ParseError(peek().offset, "unexpected trailing input '" + peek().text + "'");
    }
    return root;
  }

 private:
  // ----------------------------------------------------------- token helpers
  const Token& peek(std::size_t ahead = 0) const {
    const std::size_t i = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[i];
  }
  const Token& advance() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  static bool is_kw(const Token& t, std::string_view kw) {
    return t.type == TokenType::kIdent && t.text == kw;
  }
  static bool is_sym(const Token& t, std::string_view s) {
    return t.type == TokenType::kSymbol && t.text == s;
  }
  bool accept_kw(std::string_view kw) {
    if (is_kw(peek(), kw)) {
      advance();
      return true;
    }
    return false;
  }
  bool accept_sym(std::string_view s) {
    if (is_sym(peek(), s)) {
      advance();
      return true;
    }
    return false;
  }
  void expect_kw(std::string_view kw) {
    if (!accept_kw(kw)) {
      std::string up(kw);
      for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      throw ParseError(peek().offset, "expected " + up + describe_found());
    }
  }
  void expect_sym(std::string_view s) {
    if (!accept_sym(s)) {
      throw ParseError(peek().offset, "expected '" + std::string(s) + "'" + describe_found());
    }
  }
  std::string describe_found() const {
    if (peek().type == TokenType::kEnd) return " but found end of input";
    return " but found '" + peek().text + "'";
  }
  [[noreturn]] void unsupported(const Token& t, std::string_view what) const {
    throw ParseError(t.offset, "unsupported construct: " + std::string(what));
  }

  bool at_identifier() const {
    const Token& t = peek();
    return t.type == TokenType::kQuotedIdent ||
           (t.type == TokenType::kIdent && !is_reserved(t.text));
  }

  // Returns the normalized identifier text.
  std::string identifier() {
    const Token& t = peek();
    if (t.type == TokenType::kQuotedIdent) {
      advance();
      return is_simple_folded(t.text) ? t.text : "\"" + t.text + "\"";
    }
    if (t.type == TokenType::kIdent && !is_reserved(t.text)) {
      advance();
      return t.text;
    }
    throw ParseError(t.offset, "expected identifier" + describe_found());
  }

  // ------------------------------------------------------------------ query
  AstNode query() {
    if (accept_kw("with")) {
      AstNode with(NodeKind::kWith);
      if (accept_kw("recursive")) with.value = "RECURSIVE";
      do {
        std::string name = identifier();
        if (is_sym(peek(), "(")) unsupported(peek(), "CTE column list");
        expect_kw("as");
        if (is_kw(peek(), "materialized") || is_kw(peek(), "not")) {
          unsupported(peek(), "CTE materialization hint");
        }
        expect_sym("(");
        AstNode body = query();
        expect_sym(")");
        with.children.emplace_back(NodeKind::kCte, std::move(name),
                                   std::vector<AstNode>{std::move(body)});
      } while (accept_sym(","));
      with.children.push_back(query_body());
      return with;
    }
    return query_body();
  }

  // set expression plus trailing ORDER BY / LIMIT / OFFSET
  AstNode query_body() {
    AstNode body = set_expr();
    const bool has_order = is_kw(peek(), "order");
    const bool has_limit = is_kw(peek(), "limit") || is_kw(peek(), "offset") ||
                           is_kw(peek(), "fetch");
    if (!has_order && !has_limit) return body;

    // The tail attaches to the body node, so a parenthesized body that already
    // has one (or is a WITH) cannot take a second.
    if (body.kind == NodeKind::kWith || carries_tail(body)) {
      throw ParseError(peek().offset,
                       "unsupported construct: ORDER BY/LIMIT applied to a "
                       "parenthesized query that already has one");
    }

    if (accept_kw("order")) {
      expect_kw("by");
      body.children.push_back(order_list());
    }
    parse_limit_offset(body);
    return body;
  }

  static bool carries_tail(const AstNode& n) {
    return std::any_of(n.children.begin(), n.children.end(), [](const AstNode& c) {
      return c.kind == NodeKind::kOrderBy || c.kind == NodeKind::kLimit ||
             c.kind == NodeKind::kOffset;
    });
  }

  void parse_limit_offset(AstNode& body) {
    AstNode limit, offset;
    bool have_limit = false, have_offset = false;
    for (;;) {
      if (!have_limit && accept_kw("limit")) {
        if (accept_kw("all")) {
          have_limit = false;
        } else {
          limit = AstNode(NodeKind::kLimit, "", {expression()});
          have_limit = true;
        }
        continue;
      }
      if (!have_offset && is_kw(peek(), "offset")) {
        advance();
        offset = AstNode(NodeKind::kOffset, "", {expression()});
        if (!accept_kw("rows")) accept_kw("row");
        have_offset = true;
        continue;
      }
      if (!have_limit && is_kw(peek(), "fetch")) {
        advance();
        if (!accept_kw("first")) expect_kw("next");
        AstNode count(NodeKind::kLiteral, "1");
        if (!is_kw(peek(), "row") && !is_kw(peek(), "rows")) count = primary();
        if (!accept_kw("rows")) expect_kw("row");
        expect_kw("only");
        limit = AstNode(NodeKind::kLimit, "", {std::move(count)});
        have_limit = true;
        continue;
      }
      break;
    }
    if (have_limit) body.children.push_back(std::move(limit));
    if (have_offset) body.children.push_back(std::move(offset));
  }

  AstNode set_expr() {
    AstNode left = set_term();
    for (;;) {
      std::string op;
      if (accept_kw("union")) {
        op = "UNION";
      } else if (accept_kw("except")) {
        op = "EXCEPT";
      } else {
        break;
      }
      if (accept_kw("all")) {
        op += " ALL";
      } else {
        accept_kw("distinct");
      }
      AstNode right = set_term();
      left = AstNode(NodeKind::kSetOp, op, {std::move(left), std::move(right)});
    }
    return left;
  }

  AstNode set_term() {
    AstNode left = set_primary();
    while (accept_kw("intersect")) {
      std::string op = "INTERSECT";
      if (accept_kw("all")) {
        op += " ALL";
      } else {
        accept_kw("distinct");
      }
      AstNode right = set_primary();
      left = AstNode(NodeKind::kSetOp, op, {std::move(left), std::move(right)});
    }
    return left;
  }

  AstNode set_primary() {
    if (is_sym(peek(), "(")) {
      advance();
      AstNode inner = query();
      expect_sym(")");
      return inner;
    }
    if (!is_kw(peek(), "select")) {
      throw ParseError(peek().offset, "expected SELECT" + describe_found());
    }
    return select_core();
  }

  AstNode select_core() {
    expect_kw("select");
    AstNode select(NodeKind::kSelect);
    if (accept_kw("distinct")) {
      if (accept_kw("on")) {
        expect_sym("(");
        AstNode on(NodeKind::kDistinctOn, "", expression_list());
        expect_sym(")");
        select.children.push_back(std::move(on));
      } else {
        select.children.emplace_back(NodeKind::kDistinct);
      }
    } else {
      accept_kw("all");
    }

    AstNode list(NodeKind::kSelectList);
    do {
      list.children.push_back(select_item());
    } while (accept_sym(","));
    select.children.push_back(std::move(list));

    if (accept_kw("from")) {
      AstNode from(NodeKind::kFrom);
      do {
        from.children.push_back(table_ref());
      } while (accept_sym(","));
      select.children.push_back(std::move(from));
    }
    if (accept_kw("where")) {
      select.children.emplace_back(NodeKind::kWhere, "", std::vector<AstNode>{expression()});
    }
    if (accept_kw("group")) {
      expect_kw("by");
      select.children.emplace_back(NodeKind::kGroupBy, "", expression_list());
    }
    if (accept_kw("having")) {
      select.children.emplace_back(NodeKind::kHaving, "", std::vector<AstNode>{expression()});
    }
    if (is_kw(peek(), "window")) unsupported(peek(), "WINDOW clause");
    return select;
  }

  bool at_select_item_end() const {
    const Token& t = peek();
    static constexpr std::array<std::string_view, 11> kClauseStarts = {
        "from", "where", "group", "having", "order", "limit",
        "offset", "union", "intersect", "except", "fetch"};
    if (t.type == TokenType::kIdent &&
        std::find(kClauseStarts.begin(), kClauseStarts.end(), t.text) != kClauseStarts.end()) {
      return true;
    }
    return t.type == TokenType::kEnd || is_sym(t, ",") || is_sym(t, ")") || is_sym(t, ";");
  }

  AstNode select_item() {
    const Token& start = peek();
    if (is_sym(start, "*")) {
      advance();
      return AstNode(NodeKind::kStar);
    }
    // qualifier.*
    if ((start.type == TokenType::kIdent || start.type == TokenType::kQuotedIdent) &&
        is_sym(peek(1), ".") && is_sym(peek(2), "*")) {
      std::string q = identifier();
      advance();
      advance();
      return AstNode(NodeKind::kStar, std::move(q));
    }
    if (at_select_item_end()) {
      throw ParseError(start.offset, "expected select item" + describe_found());
    }
    AstNode expr = expression();
    if (accept_kw("as")) {
      return AstNode(NodeKind::kAlias, identifier(), {std::move(expr)});
    }
    if (at_identifier()) {
      return AstNode(NodeKind::kAlias, identifier(), {std::move(expr)});
    }
    return expr;
  }

  // --------------------------------------------------------------- FROM
  AstNode table_ref() {
    AstNode left = table_primary();
    for (;;) {
      std::string type;
      bool natural = false;
      if (accept_kw("natural")) natural = true;
      if (accept_kw("cross")) {
        type = "CROSS";
      } else if (accept_kw("inner")) {
        type = "INNER";
      } else if (accept_kw("left")) {
        accept_kw("outer");
        type = "LEFT";
      } else if (accept_kw("right")) {
        accept_kw("outer");
        type = "RIGHT";
      } else if (accept_kw("full")) {
        accept_kw("outer");
        type = "FULL";
      } else if (is_kw(peek(), "join")) {
        type = "INNER";
      } else {
        if (natural) throw ParseError(peek().offset, "expected JOIN after NATURAL");
        break;
      }
      expect_kw("join");
      AstNode right = table_primary();
      AstNode join(NodeKind::kJoin, natural ? "NATURAL " + type : type,
                   {std::move(left), std::move(right)});
      if (type != "CROSS" && !natural) {
        if (accept_kw("on")) {
          join.children.emplace_back(NodeKind::kOn, "", std::vector<AstNode>{expression()});
        } else if (accept_kw("using")) {
          expect_sym("(");
          AstNode using_node(NodeKind::kUsing);
          do {
            using_node.children.emplace_back(NodeKind::kIdentifier, identifier());
          } while (accept_sym(","));
          expect_sym(")");
          join.children.push_back(std::move(using_node));
        } else {
          throw ParseError(peek().offset, "expected ON or USING" + describe_found());
        }
      }
      left = std::move(join);
    }
    return left;
  }

  AstNode table_primary() {
    const Token& t = peek();
    if (is_kw(t, "lateral")) unsupported(t, "LATERAL");
    if (is_sym(t, "(")) {
      // derived table or parenthesized join
      const Token& next = peek(1);
      if (is_kw(next, "select") || is_kw(next, "with")) {
        advance();
        AstNode sub(NodeKind::kSubquery, "", {query()});
        expect_sym(")");
        return maybe_alias(std::move(sub), /*required=*/false);
      }
      advance();
      AstNode inner = table_ref();
      expect_sym(")");
      return inner;
    }
    std::string name = identifier();
    while (accept_sym(".")) name += "." + identifier();
    if (is_sym(peek(), "(")) unsupported(peek(), "table function");
    return maybe_alias(AstNode(NodeKind::kTable, std::move(name)), false);
  }

  AstNode maybe_alias(AstNode node, bool required) {
    if (accept_kw("as") || at_identifier()) {
      AstNode alias(NodeKind::kAlias, identifier(), {std::move(node)});
      if (is_sym(peek(), "(")) unsupported(peek(), "column alias list");
      return alias;
    }
    if (required) throw ParseError(peek().offset, "expected alias" + describe_found());
    return node;
  }

  // ------------------------------------------------------------- ORDER BY
  AstNode order_list() {
    AstNode order(NodeKind::kOrderBy);
    do {
      AstNode key = expression();
      std::string dir = "ASC";
      if (accept_kw("desc")) {
        dir = "DESC";
      } else {
        accept_kw("asc");
      }
      if (is_kw(peek(), "using")) unsupported(peek(), "ORDER BY USING");
      if (accept_kw("nulls")) {
        if (accept_kw("first")) {
          dir += " NULLS FIRST";
        } else {
          expect_kw("last");
          dir += " NULLS LAST";
        }
      }
      order.children.emplace_back(NodeKind::kSort, std::move(dir),
                                  std::vector<AstNode>{std::move(key)});
    } while (accept_sym(","));
    return order;
  }

  // ---------------------------------------------------------- expressions
  std::vector<AstNode> expression_list() {
    std::vector<AstNode> out;
    do {
      out.push_back(expression());
    } while (accept_sym(","));
    return out;
  }

  AstNode expression() { return or_expr(); }

  AstNode or_expr() {
    AstNode left = and_expr();
    while (accept_kw("or")) {
      left = AstNode(NodeKind::kOr, "", {std::move(left), and_expr()});
    }
    return left;
  }

  AstNode and_expr() {
    AstNode left = not_expr();
    while (accept_kw("and")) {
      left = AstNode(NodeKind::kAnd, "", {std::move(left), not_expr()});
    }
    return left;
  }

  AstNode not_expr() {
    if (accept_kw("not")) return AstNode(NodeKind::kNot, "", {not_expr()});
    return is_expr();
  }

  AstNode is_expr() {
    AstNode left = cmp_expr();
    while (is_kw(peek(), "is")) {
      const Token& is_tok = advance();
      const bool negated = accept_kw("not");
      if (!accept_kw("null")) unsupported(is_tok, "IS without NULL");
      left = AstNode(negated ? NodeKind::kIsNotNull : NodeKind::kIsNull, "",
                     {std::move(left)});
    }
    return left;
  }

  static bool is_cmp_op(const Token& t) {
    if (t.type != TokenType::kSymbol) return false;
    return t.text == "=" || t.text == "<>" || t.text == "<" || t.text == "<=" ||
           t.text == ">" || t.text == ">=";
  }

  AstNode cmp_expr() {
    AstNode left = pred_expr();
    if (!is_cmp_op(peek())) return left;
    std::string op = advance().text;
    if (is_kw(peek(), "any") || is_kw(peek(), "some") || is_kw(peek(), "all")) {
      const Token& q = advance();
      const std::string quant = q.text == "all" ? "ALL" : "ANY";
      expect_sym("(");
      if (!is_kw(peek(), "select") && !is_kw(peek(), "with")) {
        unsupported(q, "quantified comparison over a non-subquery");
      }
      AstNode sub = query();
      expect_sym(")");
      return AstNode(NodeKind::kQuantified, op + " " + quant, {std::move(left), std::move(sub)});
    }
    AstNode right = pred_expr();
    if (is_cmp_op(peek())) {
      throw ParseError(peek().offset, "chained comparison operators");
    }
    return AstNode(NodeKind::kCompare, std::move(op), {std::move(left), std::move(right)});
  }

  AstNode pred_expr() {
    AstNode left = concat_expr();
    for (;;) {
      const bool negated = is_kw(peek(), "not") &&
                           (is_kw(peek(1), "between") || is_kw(peek(1), "in") ||
                            is_kw(peek(1), "like") || is_kw(peek(1), "ilike"));
      if (negated) advance();
      if (accept_kw("between")) {
        if (accept_kw("symmetric")) unsupported(peek(), "BETWEEN SYMMETRIC");
        AstNode lo = concat_expr();
        expect_kw("and");
        AstNode hi = concat_expr();
        left = AstNode(negated ? NodeKind::kNotBetween : NodeKind::kBetween, "",
                       {std::move(left), std::move(lo), std::move(hi)});
        continue;
      }
      if (accept_kw("in")) {
        expect_sym("(");
        if (is_kw(peek(), "select") || is_kw(peek(), "with")) {
          AstNode sub = query();
          expect_sym(")");
          left = AstNode(negated ? NodeKind::kNotInSubquery : NodeKind::kInSubquery, "",
                         {std::move(left), std::move(sub)});
        } else {
          std::vector<AstNode> items;
          items.push_back(std::move(left));
          for (auto& e : expression_list()) items.push_back(std::move(e));
          expect_sym(")");
          left = AstNode(negated ? NodeKind::kNotInList : NodeKind::kInList, "",
                         std::move(items));
        }
        continue;
      }
      if (is_kw(peek(), "like") || is_kw(peek(), "ilike")) {
        std::string op = advance().text == "like" ? "LIKE" : "ILIKE";
        if (negated) op = "NOT " + op;
        AstNode pattern = concat_expr();
        if (is_kw(peek(), "escape")) unsupported(peek(), "LIKE ... ESCAPE");
        left = AstNode(NodeKind::kLike, std::move(op), {std::move(left), std::move(pattern)});
        continue;
      }
      if (negated) throw ParseError(peek().offset, "dangling NOT");
      break;
    }
    return left;
  }

  AstNode concat_expr() {
    AstNode left = add_expr();
    while (accept_sym("||")) {
      left = AstNode(NodeKind::kArith, "||", {std::move(left), add_expr()});
    }
    return left;
  }

  AstNode add_expr() {
    AstNode left = mul_expr();
    for (;;) {
      if (is_sym(peek(), "+") || is_sym(peek(), "-")) {
        std::string op = advance().text;
        left = AstNode(NodeKind::kArith, std::move(op), {std::move(left), mul_expr()});
        continue;
      }
      break;
    }
    return left;
  }

  AstNode mul_expr() {
    AstNode left = unary_expr();
    for (;;) {
      if (is_sym(peek(), "*") || is_sym(peek(), "/") || is_sym(peek(), "%")) {
        std::string op = advance().text;
        left = AstNode(NodeKind::kArith, std::move(op), {std::move(left), unary_expr()});
        continue;
      }
      break;
    }
    return left;
  }

  AstNode unary_expr() {
    if (accept_sym("-")) return AstNode(NodeKind::kNegate, "", {unary_expr()});
    if (accept_sym("+")) return unary_expr();
    return postfix_expr();
  }

  AstNode postfix_expr() {
    AstNode node = primary();
    while (accept_sym("::")) {
      node = AstNode(NodeKind::kCast, type_name(), {std::move(node)});
    }
    return node;
  }

  std::string type_name() {
    const Token& t = peek();
    if (t.type != TokenType::kIdent) {
      throw ParseError(t.offset, "expected type name" + describe_found());
    }
    std::string name = advance().text;
    if (name == "double" && accept_kw("precision")) name = "double precision";
    if (name == "character" && accept_kw("varying")) name = "character varying";
    if ((name == "timestamp" || name == "time") &&
        (is_kw(peek(), "with") || is_kw(peek(), "without"))) {
      const bool with = advance().text == "with";
      expect_kw("time");
      expect_kw("zone");
      name += with ? " with time zone" : " without time zone";
    }
    if (accept_sym("(")) {
      name += "(";
      for (bool first = true;; first = false) {
        const Token& num = peek();
        if (num.type != TokenType::kNumber) {
          throw ParseError(num.offset, "expected type modifier" + describe_found());
        }
        if (!first) name += ",";
        name += advance().text;
        if (!accept_sym(",")) break;
      }
      expect_sym(")");
      name += ")";
    }
    if (is_sym(peek(), "[")) unsupported(peek(), "array type");
    return name;
  }

  AstNode primary() {
    const Token& t = peek();
    switch (t.type) {
      case TokenType::kNumber:
        advance();
        return AstNode(NodeKind::kLiteral, t.text);
      case TokenType::kString:
        advance();
        return AstNode(NodeKind::kLiteral, t.text);
      case TokenType::kSymbol:
        if (t.text == "(") {
          advance();
          if (is_kw(peek(), "select") || is_kw(peek(), "with")) {
            AstNode sub = query();
            expect_sym(")");
            return AstNode(NodeKind::kScalarSubquery, "", {std::move(sub)});
          }
          AstNode inner = expression();
          if (is_sym(peek(), ",")) unsupported(peek(), "row constructor");
          expect_sym(")");
          return inner;
        }
        throw ParseError(t.offset, "unexpected '" + t.text + "'");
      case TokenType::kEnd:
        throw ParseError(t.offset, "unexpected end of input");
      case TokenType::kQuotedIdent:
        return name_or_call();
      case TokenType::kIdent:
        break;
    }

    const std::string& w = t.text;
    if (w == "null") {
      advance();
      return AstNode(NodeKind::kLiteral, "NULL");
    }
    if (w == "true" || w == "false") {
      advance();
      return AstNode(NodeKind::kLiteral, w);
    }
    if ((w == "date" || w == "timestamp" || w == "time") &&
        peek(1).type == TokenType::kString) {
      advance();
      const Token& s = advance();
      return AstNode(NodeKind::kLiteral, w + " " + s.text);
    }
    if (w == "interval" && peek(1).type == TokenType::kString) {
      advance();
      const Token& s = advance();
      std::string text = "interval " + s.text;
      if (peek().type == TokenType::kIdent && is_interval_unit(peek().text)) {
        text += " " + advance().text;
      }
      return AstNode(NodeKind::kLiteral, std::move(text));
    }
    if (w == "exists") {
      advance();
      expect_sym("(");
      AstNode sub = query();
      expect_sym(")");
      return AstNode(NodeKind::kExists, "", {std::move(sub)});
    }
    if (w == "case") return case_expr();
    if (w == "cast") {
      advance();
      expect_sym("(");
      AstNode inner = expression();
      expect_kw("as");
      std::string type = type_name();
      expect_sym(")");
      return AstNode(NodeKind::kCast, std::move(type), {std::move(inner)});
    }
    if (w == "extract" && is_sym(peek(1), "(")) {
      advance();
      advance();
      const Token& field = peek();
      if (field.type != TokenType::kIdent && field.type != TokenType::kString) {
        throw ParseError(field.offset, "expected EXTRACT field" + describe_found());
      }
      std::string name = advance().text;
      if (!name.empty() && name.front() == '\'') name = name.substr(1, name.size() - 2);
      expect_kw("from");
      AstNode source = expression();
      expect_sym(")");
      return AstNode(NodeKind::kExtract, std::move(name), {std::move(source)});
    }
    if (w == "substring" && is_sym(peek(1), "(")) return substring_expr();
    if (w == "position" && is_sym(peek(1), "(")) unsupported(t, "POSITION");
    if (w == "trim" && is_sym(peek(1), "(")) unsupported(t, "TRIM");
    if ((w == "left" || w == "right") && is_sym(peek(1), "(")) return name_or_call();
    if (is_reserved(w)) {
      throw ParseError(t.offset, "unexpected keyword '" + w + "'");
    }
    return name_or_call();
  }

  AstNode case_expr() {
    expect_kw("case");
    AstNode node(NodeKind::kCase);
    if (!is_kw(peek(), "when")) {
      node.value = "simple";
      node.children.push_back(expression());
    }
    if (!is_kw(peek(), "when")) {
      throw ParseError(peek().offset, "expected WHEN" + describe_found());
    }
    while (accept_kw("when")) {
      AstNode cond = expression();
      expect_kw("then");
      AstNode result = expression();
      node.children.emplace_back(NodeKind::kWhen, "",
                                 std::vector<AstNode>{std::move(cond), std::move(result)});
    }
    if (accept_kw("else")) {
      node.children.emplace_back(NodeKind::kElse, "", std::vector<AstNode>{expression()});
    }
    expect_kw("end");
    return node;
  }

  AstNode substring_expr() {
    advance();
    advance();
    AstNode fn(NodeKind::kFunction, "substring");
    fn.children.push_back(expression());
    if (accept_kw("from")) {
      fn.children.push_back(expression());
      if (accept_kw("for")) fn.children.push_back(expression());
    } else {
      while (accept_sym(",")) fn.children.push_back(expression());
    }
    expect_sym(")");
    return fn;
  }

  AstNode name_or_call() {
    const Token& start = peek();
    std::string name;
    if (start.type == TokenType::kIdent && (start.text == "left" || start.text == "right")) {
      name = advance().text;
    } else {
      name = identifier();
    }
    while (is_sym(peek(), ".")) {
      if (is_sym(peek(1), "*")) {
        throw ParseError(peek(1).offset, "qualified * is only valid as a select item");
      }
      advance();
      name += "." + identifier();
    }
    if (!is_sym(peek(), "(")) return AstNode(NodeKind::kIdentifier, std::move(name));

    advance();
    AstNode fn(NodeKind::kFunction, std::move(name));
    if (accept_sym("*")) {
      fn.children.emplace_back(NodeKind::kStar);
    } else if (!is_sym(peek(), ")")) {
      if (accept_kw("distinct")) {
        fn.children.emplace_back(NodeKind::kDistinct);
      } else {
        accept_kw("all");
      }
      for (auto& e : expression_list()) fn.children.push_back(std::move(e));
      if (is_kw(peek(), "order")) unsupported(peek(), "ordered-set aggregate arguments");
    }
    expect_sym(")");
    if (is_kw(peek(), "filter")) unsupported(peek(), "FILTER clause");
    if (is_kw(peek(), "within")) unsupported(peek(), "WITHIN GROUP");
    if (accept_kw("over")) fn.children.push_back(over_clause());
    return fn;
  }

  AstNode over_clause() {
    if (!is_sym(peek(), "(")) unsupported(peek(), "named window reference");
    advance();
    AstNode over(NodeKind::kOver);
    if (accept_kw("partition")) {
      expect_kw("by");
      over.children.emplace_back(NodeKind::kPartitionBy, "", expression_list());
    }
    if (accept_kw("order")) {
      expect_kw("by");
      over.children.push_back(order_list());
    }
    if (is_kw(peek(), "rows") || is_kw(peek(), "range") || is_kw(peek(), "groups")) {
      unsupported(peek(), "window frame clause");
    }
    expect_sym(")");
    return over;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

QueryAst parse_sql(std::string_view text) {
  Parser parser(detail::tokenize(text));
  QueryAst ast;
  ast.root = parser.statement();
  ast.source_text = std::string(text);
  return ast;
}

}  // namespace e3::sql
