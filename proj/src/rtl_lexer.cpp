#include "rtlguard/rtl_lexer.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace rtlguard {

namespace {

constexpr std::array<std::string_view, 56> kKeywords{
    "always",      "always_comb", "always_ff", "always_latch", "and",       "assign",
    "begin",       "case",        "casex",     "casez",        "default",   "defparam",
    "else",        "end",         "endcase",   "endfunction",  "endgenerate", "endmodule",
    "endtask",     "for",         "forever",   "fork",         "function",  "generate",
    "genvar",      "if",          "initial",   "inout",        "input",     "integer",
    "join",        "localparam",  "logic",     "macromodule",  "module",    "nand",
    "negedge",     "nor",         "not",       "or",           "output",    "parameter",
    "posedge",     "real",        "reg",       "repeat",       "signed",    "supply0",
    "supply1",     "task",        "tri",       "while",        "wire",      "xnor",
    "xor",         "buf"};

constexpr std::array<std::string_view, 24> kOperators{
    "<<<", ">>>", "===", "!==", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
    "~&",  "~|",  "~^",  "^~",  "**", "+:", "-:", "->", "+",  "-",  "*",  "/"};
constexpr std::string_view kSingleOps = "%&|^~!<>?:=@#";
constexpr std::string_view kPunct = "()[]{},;.";

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_'; }
bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '$'; }

}  // namespace

bool is_verilog_keyword(std::string_view word) {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  int line = 1;
  int col = 1;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  auto emit = [&](TokenKind kind, std::size_t len) {
    out.push_back(Token{kind, std::string(src.substr(i, len)), line, col, i});
    advance(len);
  };

  while (i < src.size()) {
    const auto c = static_cast<unsigned char>(src[i]);
    if (std::isspace(c)) {
      advance(1);
      continue;
    }
    if (src.compare(i, 2, "//") == 0) {
      auto e = src.find('\n', i);
      advance((e == std::string_view::npos ? src.size() : e) - i);
      continue;
    }
    if (src.compare(i, 2, "/*") == 0) {
      auto e = src.find("*/", i + 2);
      advance((e == std::string_view::npos ? src.size() : e + 2) - i);
      continue;
    }
    if (c == '`') {
      auto e = src.find('\n', i);
      emit(TokenKind::directive, (e == std::string_view::npos ? src.size() : e) - i);
      continue;
    }
    if (c == '"') {
      std::size_t j = i + 1;
      while (j < src.size() && src[j] != '"' && src[j] != '\n') j += (src[j] == '\\') ? 2 : 1;
      j = std::min(j + 1, src.size());
      emit(TokenKind::string, j - i);
      continue;
    }
    if (ident_start(c)) {
      std::size_t j = i + 1;
      while (j < src.size() && ident_char(static_cast<unsigned char>(src[j]))) ++j;
      const auto word = src.substr(i, j - i);
      emit(is_verilog_keyword(word) ? TokenKind::keyword : TokenKind::identifier, j - i);
      continue;
    }
    if (c == '\\') {  // escaped identifier runs to whitespace
      std::size_t j = i + 1;
      while (j < src.size() && !std::isspace(static_cast<unsigned char>(src[j]))) ++j;
      emit(TokenKind::identifier, j - i);
      continue;
    }
    if (c == '$' && i + 1 < src.size() && ident_start(static_cast<unsigned char>(src[i + 1]))) {
      std::size_t j = i + 1;
      while (j < src.size() && ident_char(static_cast<unsigned char>(src[j]))) ++j;
      emit(TokenKind::system_id, j - i);
      continue;
    }
    if (std::isdigit(c) || (c == '\'' && i + 1 < src.size())) {
      // [size]['[s]base digits] or a plain/real decimal
      std::size_t j = i;
      while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      if (j < src.size() && src[j] == '.' && j + 1 < src.size() &&
          std::isdigit(static_cast<unsigned char>(src[j + 1]))) {
        ++j;
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      std::size_t k = j;
      while (k < src.size() && (src[k] == ' ' || src[k] == '\t') && j > i) ++k;
      if (k < src.size() && src[k] == '\'') {
        std::size_t m = k + 1;
        if (m < src.size() && (src[m] == 's' || src[m] == 'S')) ++m;
        if (m < src.size() && std::string_view("bBoOdDhH").find(src[m]) != std::string_view::npos) {
          ++m;
          while (m < src.size() && (src[m] == ' ' || src[m] == '\t')) ++m;
          while (m < src.size() && (std::isxdigit(static_cast<unsigned char>(src[m])) ||
                                    std::string_view("xXzZ_?").find(src[m]) != std::string_view::npos)) {
            ++m;
          }
          j = m;
        } else if (m < src.size() && (src[m] == '0' || src[m] == '1' || src[m] == 'x' ||
                                      src[m] == 'X' || src[m] == 'z' || src[m] == 'Z')) {
          j = m + 1;  // unbased unsized literal '0 / '1
        }
      }
      if (j == i) {
        emit(TokenKind::unknown, 1);
      } else {
        emit(TokenKind::number, j - i);
      }
      continue;
    }
    bool matched = false;
    for (auto op : kOperators) {
      if (src.compare(i, op.size(), op) == 0) {
        emit(TokenKind::op, op.size());
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (kSingleOps.find(static_cast<char>(c)) != std::string_view::npos) {
      emit(TokenKind::op, 1);
      continue;
    }
    if (kPunct.find(static_cast<char>(c)) != std::string_view::npos) {
      emit(TokenKind::punct, 1);
      continue;
    }
    emit(TokenKind::unknown, 1);
  }
  return out;
}

}  // namespace rtlguard
