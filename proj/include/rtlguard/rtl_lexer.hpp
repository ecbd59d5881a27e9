#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rtlguard {

enum class TokenKind : std::uint8_t {
  identifier,
  keyword,
  number,
  string,
  op,
  punct,
  system_id,  // $display, $clog2, ...
  directive,  // `timescale ... (whole line)
  unknown,
};

struct Token {
  TokenKind kind = TokenKind::unknown;
  std::string text;
  int line = 1;
  int col = 1;
  std::size_t offset = 0;  // byte offset into the source

  bool is(TokenKind k, std::string_view t) const { return kind == k && text == t; }
  bool is_keyword(std::string_view t) const { return is(TokenKind::keyword, t); }
  bool is_op(std::string_view t) const { return is(TokenKind::op, t); }
  bool is_punct(std::string_view t) const { return is(TokenKind::punct, t); }
};

bool is_verilog_keyword(std::string_view word);

/// Comments and whitespace are dropped. Never throws: bytes that start no
/// known token become single-byte `unknown` tokens.
std::vector<Token> tokenize(std::string_view source);

}  // namespace rtlguard
