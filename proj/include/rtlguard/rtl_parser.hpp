#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rtlguard/error.hpp"
#include "rtlguard/rtl_lexer.hpp"

namespace rtlguard {

enum class NodeType : std::uint8_t {
  Root,
  Module,
  ParamList,
  PortList,
  Port,
  PortDecl,
  NetDecl,
  RegDecl,
  VarDecl,
  ParamDecl,
  Range,
  ContinuousAssign,
  Always,
  Initial,
  EventControl,
  EventExpr,
  Block,
  If,
  Case,
  CaseItem,
  For,
  Loop,
  BlockingAssign,
  NonblockingAssign,
  Delay,
  Instantiation,
  PortConnection,
  BinaryOp,
  UnaryOp,
  Ternary,
  Identifier,
  Number,
  String,
  Concat,
  Replication,
  Select,
  Call,
  Opaque,
  Count_,
};

inline constexpr std::size_t kNodeTypeCount = static_cast<std::size_t>(NodeType::Count_);

std::string_view to_string(NodeType t);

struct Node {
  NodeType type = NodeType::Opaque;
  /// Operator for BinaryOp/UnaryOp, name for Identifier, literal for Number,
  /// direction for Port/PortDecl, keyword for Always/Case, edge for EventExpr.
  std::string text;
  int parent = -1;
  std::vector<int> children;
  std::uint32_t first_token = 0;  // half-open token span
  std::uint32_t end_token = 0;
};

/// Production-labelled tree over a recognized Verilog subset. nodes[0] is the
/// Root spanning every token; unrecognized regions are Opaque leaves.
struct SyntaxTree {
  std::vector<Token> tokens;
  std::vector<Node> nodes;

  const Node& root() const { return nodes.front(); }
  std::size_t count(NodeType t) const;
  std::size_t module_count() const { return count(NodeType::Module); }
  /// Maximum node depth, root at depth 0.
  int depth() const;
};

/// Unbalanced module/endmodule or begin/end.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line, int col)
      : Error(msg + " at " + std::to_string(line) + ":" + std::to_string(col)),
        line_(line),
        col_(col) {}

  int line() const noexcept { return line_; }
  int col() const noexcept { return col_; }

 private:
  int line_;
  int col_;
};

SyntaxTree parse_rtl(std::string_view source);

/// Structural balance check shared by the parser and the quality scorer.
/// Returns the first offending token index, or -1 when balanced.
struct BalanceReport {
  int module_opens = 0;
  int module_closes = 0;
  int matched_modules = 0;
  int first_bad_module_token = -1;  // -1 when module/endmodule balance
  int first_bad_begin_token = -1;   // -1 when begin/end balance
  /// Unbalanced begin/end-style keyword classes (begin/end, case/endcase,
  /// fork/join, function/endfunction, task/endtask, generate/endgenerate).
  int unbalanced_block_classes = 0;
};

BalanceReport check_balance(const std::vector<Token>& tokens);

}  // namespace rtlguard
