#pragma once

#include <string_view>

namespace rtlguard {

/// Itemized deductions behind evaluate_quality().
struct QualityBreakdown {
  bool parse_failed = false;
  bool no_module_pair = false;
  int unbalanced_classes = 0;
  double nonprintable_ratio = 0;
  double score = 10;
};

/// Rule-based 0..10 score: start at 10; -6 if the text does not parse; -3
/// without a module/endmodule pair; -2 per unbalanced block keyword class
/// (at most -4); -2 if more than 5% of bytes are non-printable; floor 0.
QualityBreakdown assess_quality(std::string_view text);
double evaluate_quality(std::string_view text);

}  // namespace rtlguard
