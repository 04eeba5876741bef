#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace e3::sql::detail {

enum class TokenType {
  kIdent,        // unquoted word; `text` is folded to lower case
  kQuotedIdent,  // "..." with quotes stripped and "" unescaped
  kNumber,
  kString,       // verbatim, quotes included
  kSymbol,
  kEnd,
};

struct Token {
  TokenType type = TokenType::kEnd;
  std::string text;
  std::size_t offset = 0;
};

// Throws ParseError on unterminated strings/comments and stray characters.
std::vector<Token> tokenize(std::string_view input);

}  // namespace e3::sql::detail
