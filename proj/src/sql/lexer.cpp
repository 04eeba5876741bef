#include "lexer.hpp"

#include <cctype>

#include "e3/error.hpp"

namespace e3::sql::detail {
namespace {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)); }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<Token> tokenize(std::string_view in) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  const std::size_t n = in.size();

  while (i < n) {
    const char c = in[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '-' && i + 1 < n && in[i + 1] == '-') {
      while (i < n && in[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && in[i + 1] == '*') {
      const std::size_t start = i;
      i += 2;
      while (i + 1 < n && !(in[i] == '*' && in[i + 1] == '/')) ++i;
      if (i + 1 >= n) throw ParseError(start, "unterminated comment");
      i += 2;
      continue;
    }

    const std::size_t start = i;
    if (is_ident_start(c)) {
      while (i < n && is_ident_char(in[i])) ++i;
      tokens.push_back({TokenType::kIdent, lower(in.substr(start, i - start)), start});
      continue;
    }
    if (c == '"') {
      std::string text;
      ++i;
      for (;;) {
        if (i >= n) throw ParseError(start, "unterminated quoted identifier");
        if (in[i] == '"') {
          if (i + 1 < n && in[i + 1] == '"') {
            text.push_back('"');
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        text.push_back(in[i++]);
      }
      if (text.empty()) throw ParseError(start, "empty quoted identifier");
      tokens.push_back({TokenType::kQuotedIdent, std::move(text), start});
      continue;
    }
    if (c == '\'') {
      ++i;
      for (;;) {
        if (i >= n) throw ParseError(start, "unterminated string literal");
        if (in[i] == '\'') {
          if (i + 1 < n && in[i + 1] == '\'') {
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        ++i;
      }
      tokens.push_back({TokenType::kString, std::string(in.substr(start, i - start)), start});
      continue;
    }
    if (is_digit(c) || (c == '.' && i + 1 < n && is_digit(in[i + 1]))) {
      while (i < n && is_digit(in[i])) ++i;
      if (i < n && in[i] == '.') {
        ++i;
        while (i < n && is_digit(in[i])) ++i;
      }
      if (i < n && (in[i] == 'e' || in[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < n && (in[j] == '+' || in[j] == '-')) ++j;
        if (j < n && is_digit(in[j])) {
          i = j;
          while (i < n && is_digit(in[i])) ++i;
        }
      }
      if (i < n && is_ident_start(in[i])) {
        throw ParseError(i, "malformed number");
      }
      tokens.push_back({TokenType::kNumber, std::string(in.substr(start, i - start)), start});
      continue;
    }

    static constexpr std::string_view kTwoChar[] = {"<=", ">=", "<>", "!=", "||", "::"};
    bool matched = false;
    if (i + 1 < n) {
      const std::string_view two = in.substr(i, 2);
      for (auto sym : kTwoChar) {
        if (two == sym) {
          tokens.push_back({TokenType::kSymbol, std::string(sym == "!=" ? "<>" : sym), start});
          i += 2;
          matched = true;
          break;
        }
      }
    }
    if (matched) continue;

    static constexpr std::string_view kOneChar = "(),.;*+-/%=<>";
    if (kOneChar.find(c) != std::string_view::npos) {
      tokens.push_back({TokenType::kSymbol, std::string(1, c), start});
      ++i;
      continue;
    }
    throw ParseError(start, std::string("unexpected character '") + c + "'");
  }
  tokens.push_back({TokenType::kEnd, {}, n});
  return tokens;
}

}  // namespace e3::sql::detail
