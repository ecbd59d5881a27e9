#include "rtlguard/quality.hpp"

#include <algorithm>

#include "rtlguard/rtl_lexer.hpp"
#include "rtlguard/rtl_parser.hpp"

namespace rtlguard {

QualityBreakdown assess_quality(std::string_view text) {
  QualityBreakdown q;
  try {
    parse_rtl(text);
  } catch (const ParseError&) {
    q.parse_failed = true;
  }
  const BalanceReport balance = check_balance(tokenize(text));
  q.no_module_pair = balance.matched_modules == 0;
  q.unbalanced_classes = balance.unbalanced_block_classes;
  std::size_t odd = 0;
  for (unsigned char c : text) {
    const bool printable = (c >= 0x20 && c < 0x7f) || c == '\t' || c == '\n' || c == '\r';
    if (!printable) ++odd;
  }
  q.nonprintable_ratio = text.empty() ? 0.0 : static_cast<double>(odd) / static_cast<double>(text.size());

  double score = 10;
  if (q.parse_failed) score -= 6;
  if (q.no_module_pair) score -= 3;
  score -= std::min(4, 2 * q.unbalanced_classes);
  if (q.nonprintable_ratio > 0.05) score -= 2;
  q.score = std::max(0.0, score);
  return q;
}

double evaluate_quality(std::string_view text) { return assess_quality(text).score; }

}  // namespace rtlguard
