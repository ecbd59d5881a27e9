#include "rtlguard/rtl_parser.hpp"

#include <algorithm>
#include <array>

namespace rtlguard {

namespace {

constexpr std::array<std::string_view, kNodeTypeCount> kNodeNames{
    "Root",       "Module",        "ParamList",   "PortList",          "Port",
    "PortDecl",   "NetDecl",       "RegDecl",     "VarDecl",           "ParamDecl",
    "Range",      "ContinuousAssign", "Always",   "Initial",           "EventControl",
    "EventExpr",  "Block",         "If",          "Case",              "CaseItem",
    "For",        "Loop",          "BlockingAssign", "NonblockingAssign", "Delay",
    "Instantiation", "PortConnection", "BinaryOp", "UnaryOp",          "Ternary",
    "Identifier", "Number",        "String",      "Concat",            "Replication",
    "Select",     "Call",          "Opaque"};

constexpr int kMaxNesting = 256;

int binary_precedence(const Token& t) {
  if (t.kind != TokenKind::op) return -1;
  const std::string& s = t.text;
  if (s == "||") return 1;
  if (s == "&&") return 2;
  if (s == "|") return 3;
  if (s == "^" || s == "^~" || s == "~^") return 4;
  if (s == "&") return 5;
  if (s == "==" || s == "!=" || s == "===" || s == "!==") return 6;
  if (s == "<" || s == "<=" || s == ">" || s == ">=") return 7;
  if (s == "<<" || s == ">>" || s == "<<<" || s == ">>>") return 8;
  if (s == "+" || s == "-") return 9;
  if (s == "*" || s == "/" || s == "%") return 10;
  if (s == "**") return 11;
  return -1;
}

bool is_unary_op(const Token& t) {
  if (t.kind != TokenKind::op) return false;
  static constexpr std::array<std::string_view, 10> ops{"+", "-", "!", "~", "&", "|",
                                                        "^", "~&", "~|", "~^"};
  return std::find(ops.begin(), ops.end(), t.text) != ops.end();
}

bool is_block_end(const Token& t) {
  return t.kind == TokenKind::keyword &&
         (t.text == "end" || t.text == "endcase" || t.text == "endmodule" ||
          t.text == "endfunction" || t.text == "endtask" || t.text == "endgenerate" ||
          t.text == "join");
}

class Parser {
 public:
  explicit Parser(SyntaxTree& tree) : t_(tree), toks_(tree.tokens) {}

  void run() {
    const int root = make(NodeType::Root, "", -1);
    while (!at_end()) {
      const std::size_t before = pos_;
      if (peek().is_keyword("module") || peek().is_keyword("macromodule")) {
        parse_module(root);
      } else {
        // Anything outside a module: one opaque leaf up to the next module.
        const int n = make(NodeType::Opaque, "", root);
        while (!at_end() && !peek().is_keyword("module") && !peek().is_keyword("macromodule")) {
          ++pos_;
        }
        close(n);
      }
      if (pos_ == before) ++pos_;
    }
    t_.nodes[root].first_token = 0;
    t_.nodes[root].end_token = static_cast<std::uint32_t>(toks_.size());
  }

 private:
  // ---- token helpers
  bool at_end() const { return pos_ >= toks_.size(); }
  const Token& peek(std::size_t ahead = 0) const {
    static const Token eof{TokenKind::unknown, "", 0, 0, 0};
    return pos_ + ahead < toks_.size() ? toks_[pos_ + ahead] : eof;
  }
  bool accept_punct(std::string_view p) {
    if (peek().is_punct(p)) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool accept_op(std::string_view p) {
    if (peek().is_op(p)) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool accept_kw(std::string_view k) {
    if (peek().is_keyword(k)) {
      ++pos_;
      return true;
    }
    return false;
  }

  // ---- node helpers
  int make(NodeType type, std::string text, int parent) {
    Node n;
    n.type = type;
    n.text = std::move(text);
    n.parent = parent;
    n.first_token = static_cast<std::uint32_t>(pos_);
    n.end_token = n.first_token;
    t_.nodes.push_back(std::move(n));
    const int id = static_cast<int>(t_.nodes.size() - 1);
    if (parent >= 0) t_.nodes[parent].children.push_back(id);
    return id;
  }
  void close(int id) { t_.nodes[id].end_token = static_cast<std::uint32_t>(pos_); }
  void adopt(int parent, int child) {
    if (child < 0) return;
    auto& old = t_.nodes[child].parent;
    if (old >= 0) {
      auto& sib = t_.nodes[old].children;
      sib.erase(std::remove(sib.begin(), sib.end(), child), sib.end());
    }
    old = parent;
    t_.nodes[parent].children.push_back(child);
  }

  /// Consumes up to and including the next ';' at bracket depth 0, stopping
  /// before block-closing keywords. Always consumes at least one token unless
  /// positioned on a block end.
  int opaque_statement(int parent) {
    const int n = make(NodeType::Opaque, "", parent);
    int depth = 0;
    bool consumed = false;
    while (!at_end()) {
      const Token& tk = peek();
      if (depth == 0 && is_block_end(tk)) break;
      if (depth == 0 && (tk.is_keyword("begin") || tk.is_keyword("module")) && consumed) break;
      ++pos_;
      consumed = true;
      if (tk.is_punct("(") || tk.is_punct("[") || tk.is_punct("{")) ++depth;
      if ((tk.is_punct(")") || tk.is_punct("]") || tk.is_punct("}")) && depth > 0) --depth;
      if (depth == 0 && tk.is_punct(";")) break;
    }
    close(n);
    return n;
  }

  void skip_to_semicolon() {
    int depth = 0;
    while (!at_end() && !(depth == 0 && is_block_end(peek()))) {
      const Token& tk = peek();
      ++pos_;
      if (tk.is_punct("(") || tk.is_punct("[") || tk.is_punct("{")) ++depth;
      if ((tk.is_punct(")") || tk.is_punct("]") || tk.is_punct("}")) && depth > 0) --depth;
      if (depth == 0 && tk.is_punct(";")) return;
    }
  }

  void expect_semicolon() {
    if (!accept_punct(";")) skip_to_semicolon();
  }

  // ---- module level
  void parse_module(int parent) {
    const int mod = make(NodeType::Module, "", parent);
    ++pos_;  // module
    if (peek().kind == TokenKind::identifier) {
      const int name = make(NodeType::Identifier, peek().text, mod);
      ++pos_;
      close(name);
    }
    if (peek().is_op("#") && peek(1).is_punct("(")) {
      const int pl = make(NodeType::ParamList, "", mod);
      pos_ += 2;
      while (!at_end() && !peek().is_punct(")") && !is_block_end(peek())) {
        const std::size_t before = pos_;
        if (peek().is_keyword("parameter") || peek().is_keyword("localparam")) ++pos_;
        parse_param_assign(pl);
        accept_punct(",");
        if (pos_ == before) ++pos_;
      }
      accept_punct(")");
      close(pl);
    }
    if (peek().is_punct("(")) parse_port_list(mod);
    expect_semicolon();
    while (!at_end() && !peek().is_keyword("endmodule")) {
      const std::size_t before = pos_;
      if (peek().is_keyword("module") || peek().is_keyword("macromodule")) break;
      parse_module_item(mod);
      if (pos_ == before) {
        const int n = make(NodeType::Opaque, "", mod);
        ++pos_;
        close(n);
      }
    }
    accept_kw("endmodule");
    close(mod);
  }

  void parse_port_list(int mod) {
    const int pl = make(NodeType::PortList, "", mod);
    ++pos_;  // (
    std::string direction;
    while (!at_end() && !peek().is_punct(")") && !is_block_end(peek()) && !peek().is_punct(";")) {
      const std::size_t before = pos_;
      const Token& tk = peek();
      if (tk.is_keyword("input") || tk.is_keyword("output") || tk.is_keyword("inout")) {
        direction = tk.text;
        ++pos_;
      }
      while (peek().is_keyword("wire") || peek().is_keyword("reg") ||
             peek().is_keyword("logic") || peek().is_keyword("signed")) {
        ++pos_;
      }
      const int port = make(NodeType::Port, direction, pl);
      if (peek().is_punct("[")) parse_range(port);
      if (peek().kind == TokenKind::identifier) {
        const int id = make(NodeType::Identifier, peek().text, port);
        ++pos_;
        close(id);
      } else if (peek().is_punct(".")) {
        // .name(expr) style port: treat as opaque
        while (!at_end() && !peek().is_punct(",") && !peek().is_punct(")")) ++pos_;
      }
      close(port);
      accept_punct(",");
      if (pos_ == before) ++pos_;
    }
    accept_punct(")");
    close(pl);
  }

  void parse_range(int parent) {
    const int r = make(NodeType::Range, "", parent);
    ++pos_;  // [
    if (!peek().is_punct("]")) adopt(r, parse_expr(r));
    if (accept_op(":") || accept_op("+:") || accept_op("-:")) adopt(r, parse_expr(r));
    if (!accept_punct("]")) {
      while (!at_end() && !peek().is_punct("]") && !peek().is_punct(";")) ++pos_;
      accept_punct("]");
    }
    close(r);
  }

  void parse_param_assign(int parent) {
    const int pd = make(NodeType::ParamDecl, "", parent);
    while (peek().is_keyword("integer") || peek().is_keyword("signed") ||
           peek().is_keyword("real")) {
      ++pos_;
    }
    if (peek().is_punct("[")) parse_range(pd);
    if (peek().kind == TokenKind::identifier) {
      const int id = make(NodeType::Identifier, peek().text, pd);
      ++pos_;
      close(id);
      if (accept_op("=")) adopt(pd, parse_expr(pd));
    }
    close(pd);
  }

  void parse_decl_names(int decl) {
    while (!at_end()) {
      if (peek().kind != TokenKind::identifier) break;
      const int id = make(NodeType::Identifier, peek().text, decl);
      ++pos_;
      close(id);
      while (peek().is_punct("[")) parse_range(decl);
      if (accept_op("=")) adopt(decl, parse_expr(decl));
      if (!accept_punct(",")) break;
    }
  }

  void parse_module_item(int mod) {
    const Token& tk = peek();
    if (tk.kind == TokenKind::keyword) {
      const std::string& k = tk.text;
      if (k == "input" || k == "output" || k == "inout") {
        const int pd = make(NodeType::PortDecl, k, mod);
        ++pos_;
        while (peek().is_keyword("wire") || peek().is_keyword("reg") ||
               peek().is_keyword("logic") || peek().is_keyword("signed")) {
          ++pos_;
        }
        if (peek().is_punct("[")) parse_range(pd);
        parse_decl_names(pd);
        expect_semicolon();
        close(pd);
        return;
      }
      if (k == "wire" || k == "reg" || k == "logic" || k == "tri" || k == "integer" ||
          k == "genvar" || k == "real" || k == "supply0" || k == "supply1") {
        const NodeType type = (k == "reg" || k == "logic") ? NodeType::RegDecl
                              : (k == "integer" || k == "genvar" || k == "real")
                                  ? NodeType::VarDecl
                                  : NodeType::NetDecl;
        const int d = make(type, k, mod);
        ++pos_;
        accept_kw("signed");
        if (peek().is_punct("[")) parse_range(d);
        parse_decl_names(d);
        expect_semicolon();
        close(d);
        return;
      }
      if (k == "parameter" || k == "localparam") {
        ++pos_;
        while (!at_end()) {
          const std::size_t before = pos_;
          parse_param_assign(mod);
          if (pos_ == before || !accept_punct(",")) break;
        }
        expect_semicolon();
        return;
      }
      if (k == "assign") {
        ++pos_;
        int delay = -1;
        if (peek().is_op("#")) {
          delay = make(NodeType::Delay, "", mod);
          ++pos_;
          adopt(delay, parse_primary(delay));
          close(delay);
        }
        while (!at_end()) {
          const int ca = make(NodeType::ContinuousAssign, "", mod);
          if (delay >= 0) adopt(ca, delay), delay = -1;
          adopt(ca, parse_lvalue(ca));
          if (accept_op("=")) adopt(ca, parse_expr(ca));
          close(ca);
          if (!accept_punct(",")) break;
        }
        expect_semicolon();
        return;
      }
      if (k == "always" || k == "always_ff" || k == "always_comb" || k == "always_latch") {
        const int al = make(NodeType::Always, k, mod);
        ++pos_;
        parse_statement(al, 0);
        close(al);
        return;
      }
      if (k == "initial") {
        const int in = make(NodeType::Initial, "", mod);
        ++pos_;
        parse_statement(in, 0);
        close(in);
        return;
      }
      if (k == "function" || k == "task" || k == "generate") {
        const std::string closer = "end" + k;
        const int n = make(NodeType::Opaque, k, mod);
        ++pos_;
        while (!at_end() && !peek().is_keyword(closer) && !peek().is_keyword("endmodule")) ++pos_;
        accept_kw(closer);
        close(n);
        return;
      }
    }
    if (tk.kind == TokenKind::identifier &&
        (peek(1).kind == TokenKind::identifier || peek(1).is_op("#"))) {
      parse_instantiation(mod);
      return;
    }
    opaque_statement(mod);
  }

  void parse_instantiation(int mod) {
    const int inst = make(NodeType::Instantiation, "", mod);
    const int type_id = make(NodeType::Identifier, peek().text, inst);
    ++pos_;
    close(type_id);
    if (accept_op("#")) {
      if (peek().is_punct("(")) {
        const int pl = make(NodeType::ParamList, "", inst);
        parse_connections(pl);
        close(pl);
      } else {
        adopt(inst, parse_primary(inst));
      }
    }
    if (peek().kind == TokenKind::identifier) {
      const int name = make(NodeType::Identifier, peek().text, inst);
      ++pos_;
      close(name);
      if (peek().is_punct("[")) parse_range(inst);
    }
    if (peek().is_punct("(")) parse_connections(inst);
    expect_semicolon();
    close(inst);
  }

  void parse_connections(int parent) {
    ++pos_;  // (
    while (!at_end() && !peek().is_punct(")") && !peek().is_punct(";") && !is_block_end(peek())) {
      const std::size_t before = pos_;
      const int pc = make(NodeType::PortConnection, "", parent);
      if (accept_punct(".")) {
        if (peek().kind == TokenKind::identifier) {
          const int id = make(NodeType::Identifier, peek().text, pc);
          ++pos_;
          close(id);
        }
        if (accept_punct("(")) {
          if (!peek().is_punct(")")) adopt(pc, parse_expr(pc));
          accept_punct(")");
        }
      } else {
        adopt(pc, parse_expr(pc));
      }
      close(pc);
      accept_punct(",");
      if (pos_ == before) ++pos_;
    }
    accept_punct(")");
  }

  // ---- statements
  int parse_statement(int parent, int nesting) {
    if (at_end() || is_block_end(peek())) return -1;
    if (nesting > kMaxNesting) return opaque_statement(parent);
    const Token& tk = peek();
    if (tk.is_keyword("begin") || tk.is_keyword("fork")) {
      const std::string closer = tk.text == "begin" ? "end" : "join";
      const int b = make(NodeType::Block, "", parent);
      ++pos_;
      if (accept_op(":")) {
        if (peek().kind == TokenKind::identifier) ++pos_;
      }
      while (!at_end() && !peek().is_keyword(closer)) {
        if (peek().is_keyword("endmodule") || peek().is_keyword("endcase")) break;
        const std::size_t before = pos_;
        parse_statement(b, nesting + 1);
        if (pos_ == before) {
          if (is_block_end(peek())) break;
          const int n = make(NodeType::Opaque, "", b);
          ++pos_;
          close(n);
        }
      }
      accept_kw(closer);
      if (peek().is_op(":") && peek(1).kind == TokenKind::identifier) pos_ += 2;
      close(b);
      return b;
    }
    if (tk.is_keyword("if")) {
      const int n = make(NodeType::If, "", parent);
      ++pos_;
      if (accept_punct("(")) {
        adopt(n, parse_expr(n));
        if (!accept_punct(")")) skip_until_close_paren();
      }
      parse_statement(n, nesting + 1);
      if (accept_kw("else")) {
        const int e = make(NodeType::Block, "else", n);
        parse_statement(e, nesting + 1);
        close(e);
      }
      close(n);
      return n;
    }
    if (tk.is_keyword("case") || tk.is_keyword("casez") || tk.is_keyword("casex")) {
      const int n = make(NodeType::Case, tk.text, parent);
      ++pos_;
      if (accept_punct("(")) {
        adopt(n, parse_expr(n));
        if (!accept_punct(")")) skip_until_close_paren();
      }
      while (!at_end() && !peek().is_keyword("endcase")) {
        if (peek().is_keyword("endmodule") || peek().is_keyword("end")) break;
        const std::size_t before = pos_;
        const int item = make(NodeType::CaseItem, "", n);
        if (accept_kw("default")) {
          t_.nodes[item].text = "default";
          accept_op(":");
        } else {
          while (!at_end()) {
            adopt(item, parse_expr(item));
            if (!accept_punct(",")) break;
          }
          accept_op(":");
        }
        parse_statement(item, nesting + 1);
        close(item);
        if (pos_ == before) {
          ++pos_;
          close(item);
        }
      }
      accept_kw("endcase");
      close(n);
      return n;
    }
    if (tk.is_keyword("for")) {
      const int n = make(NodeType::For, "", parent);
      ++pos_;
      if (accept_punct("(")) {
        if (!peek().is_punct(";")) parse_assignment(n, true);
        accept_punct(";");
        if (!peek().is_punct(";")) adopt(n, parse_expr(n));
        accept_punct(";");
        if (!peek().is_punct(")")) parse_assignment(n, true);
        if (!accept_punct(")")) skip_until_close_paren();
      }
      parse_statement(n, nesting + 1);
      close(n);
      return n;
    }
    if (tk.is_keyword("while") || tk.is_keyword("repeat")) {
      const int n = make(NodeType::Loop, tk.text, parent);
      ++pos_;
      if (accept_punct("(")) {
        adopt(n, parse_expr(n));
        if (!accept_punct(")")) skip_until_close_paren();
      }
      parse_statement(n, nesting + 1);
      close(n);
      return n;
    }
    if (tk.is_keyword("forever")) {
      const int n = make(NodeType::Loop, "forever", parent);
      ++pos_;
      parse_statement(n, nesting + 1);
      close(n);
      return n;
    }
    if (tk.is_op("#")) {
      const int n = make(NodeType::Delay, "", parent);
      ++pos_;
      adopt(n, parse_primary(n));
      parse_statement(n, nesting + 1);
      close(n);
      return n;
    }
    if (tk.is_op("@")) {
      const int n = parse_event_control(parent);
      parse_statement(n, nesting + 1);
      close(n);
      return n;
    }
    if (tk.is_punct(";")) {
      ++pos_;
      return -1;
    }
    if (tk.kind == TokenKind::system_id) {
      const int n = parse_primary(parent);
      expect_semicolon();
      return n;
    }
    if (tk.kind == TokenKind::identifier || tk.is_punct("{")) {
      const int n = parse_assignment(parent, false);
      if (n >= 0) {
        expect_semicolon();
        return n;
      }
    }
    return opaque_statement(parent);
  }

  void skip_until_close_paren() {
    int depth = 0;
    while (!at_end() && !is_block_end(peek()) && !peek().is_punct(";")) {
      const Token& tk = peek();
      ++pos_;
      if (tk.is_punct("(")) ++depth;
      if (tk.is_punct(")")) {
        if (depth == 0) return;
        --depth;
      }
    }
  }

  int parse_event_control(int parent) {
    const int n = make(NodeType::EventControl, "", parent);
    ++pos_;  // @
    if (accept_op("*")) {
      const int e = make(NodeType::EventExpr, "*", n);
      close(e);
    } else if (accept_punct("(")) {
      if (accept_op("*")) {
        const int e = make(NodeType::EventExpr, "*", n);
        close(e);
      } else {
        while (!at_end() && !peek().is_punct(")") && !is_block_end(peek()) &&
               !peek().is_punct(";")) {
          const std::size_t before = pos_;
          std::string edge;
          if (peek().is_keyword("posedge") || peek().is_keyword("negedge")) {
            edge = peek().text;
            ++pos_;
          }
          const int e = make(NodeType::EventExpr, edge, n);
          adopt(e, parse_expr(e));
          close(e);
          if (!accept_kw("or")) accept_punct(",");
          if (pos_ == before) ++pos_;
        }
      }
      accept_punct(")");
    } else if (peek().kind == TokenKind::identifier) {
      const int e = make(NodeType::EventExpr, "", n);
      adopt(e, parse_primary(e));
      close(e);
    }
    return n;
  }

  /// lvalue (= | <=) [#delay] expr. Returns -1 and rewinds if no assignment
  /// operator follows the lvalue.
  int parse_assignment(int parent, bool in_for) {
    const std::size_t start = pos_;
    const std::size_t node_mark = t_.nodes.size();
    const std::size_t child_mark = t_.nodes[parent].children.size();
    const int tmp = make(NodeType::BlockingAssign, "", parent);
    const int lhs = parse_lvalue(tmp);
    NodeType type;
    if (peek().is_op("=")) {
      type = NodeType::BlockingAssign;
    } else if (peek().is_op("<=")) {
      type = NodeType::NonblockingAssign;
    } else {
      // roll back
      pos_ = start;
      t_.nodes.resize(node_mark);
      t_.nodes[parent].children.resize(child_mark);
      if (in_for) opaque_statement(parent);
      return -1;
    }
    (void)lhs;
    ++pos_;
    t_.nodes[tmp].type = type;
    if (peek().is_op("#")) {
      const int d = make(NodeType::Delay, "", tmp);
      ++pos_;
      adopt(d, parse_primary(d));
      close(d);
    }
    adopt(tmp, parse_expr(tmp));
    close(tmp);
    return tmp;
  }

  int parse_lvalue(int parent) {
    if (peek().is_punct("{")) return parse_primary(parent);
    if (peek().kind == TokenKind::identifier) return parse_primary(parent);
    const int n = make(NodeType::Opaque, "", parent);
    close(n);
    return n;
  }

  // ---- expressions
  int parse_expr(int parent) { return parse_ternary(parent, 0); }

  int parse_ternary(int parent, int nesting) {
    int cond = parse_binary(parent, 1, nesting);
    if (peek().is_op("?")) {
      const int n = make(NodeType::Ternary, "?:", parent);
      t_.nodes[n].first_token = t_.nodes[cond].first_token;
      adopt(n, cond);
      ++pos_;
      adopt(n, parse_ternary(n, nesting + 1));
      if (accept_op(":")) adopt(n, parse_ternary(n, nesting + 1));
      close(n);
      return n;
    }
    return cond;
  }

  int parse_binary(int parent, int min_prec, int nesting) {
    int lhs = parse_unary(parent, nesting);
    while (true) {
      const int prec = binary_precedence(peek());
      if (prec < min_prec) return lhs;
      const int n = make(NodeType::BinaryOp, peek().text, parent);
      t_.nodes[n].first_token = t_.nodes[lhs].first_token;
      ++pos_;
      adopt(n, lhs);
      // ** is right associative; everything else left.
      const int next_min = t_.nodes[n].text == "**" ? prec : prec + 1;
      adopt(n, parse_binary(n, next_min, nesting + 1));
      close(n);
      lhs = n;
    }
  }

  int parse_unary(int parent, int nesting) {
    if (is_unary_op(peek()) && nesting < kMaxNesting) {
      const int n = make(NodeType::UnaryOp, peek().text, parent);
      ++pos_;
      adopt(n, parse_unary(n, nesting + 1));
      close(n);
      return n;
    }
    return parse_primary(parent, nesting);
  }

  int parse_primary(int parent, int nesting = 0) {
    const Token& tk = peek();
    if (nesting > kMaxNesting) {
      const int n = make(NodeType::Opaque, "", parent);
      if (!at_end()) ++pos_;
      close(n);
      return n;
    }
    if (tk.kind == TokenKind::number) {
      const int n = make(NodeType::Number, tk.text, parent);
      ++pos_;
      close(n);
      return n;
    }
    if (tk.kind == TokenKind::string) {
      const int n = make(NodeType::String, "", parent);
      ++pos_;
      close(n);
      return n;
    }
    if (tk.kind == TokenKind::identifier || tk.kind == TokenKind::system_id) {
      int base;
      if (peek(1).is_punct("(")) {
        base = make(NodeType::Call, tk.kind == TokenKind::system_id ? tk.text : "", parent);
        ++pos_;
        ++pos_;  // (
        while (!at_end() && !peek().is_punct(")") && !peek().is_punct(";") &&
               !is_block_end(peek())) {
          const std::size_t before = pos_;
          adopt(base, parse_ternary(base, nesting + 1));
          accept_punct(",");
          if (pos_ == before) break;
        }
        accept_punct(")");
        close(base);
      } else {
        base = make(NodeType::Identifier, tk.text, parent);
        ++pos_;
        while (peek().is_punct(".") && peek(1).kind == TokenKind::identifier) {
          t_.nodes[base].text += "." + peek(1).text;
          pos_ += 2;
        }
        close(base);
      }
      while (peek().is_punct("[")) {
        const int sel = make(NodeType::Select, "", parent);
        t_.nodes[sel].first_token = t_.nodes[base].first_token;
        adopt(sel, base);
        ++pos_;
        adopt(sel, parse_ternary(sel, nesting + 1));
        if (peek().is_op(":") || peek().is_op("+:") || peek().is_op("-:")) {
          t_.nodes[sel].text = peek().text;
          ++pos_;
          adopt(sel, parse_ternary(sel, nesting + 1));
        }
        if (!accept_punct("]")) {
          while (!at_end() && !peek().is_punct("]") && !peek().is_punct(";") &&
                 !is_block_end(peek())) {
            ++pos_;
          }
          accept_punct("]");
        }
        close(sel);
        base = sel;
      }
      return base;
    }
    if (tk.is_punct("(")) {
      ++pos_;
      const int inner = parse_ternary(parent, nesting + 1);
      if (!accept_punct(")")) skip_until_close_paren();
      return inner;
    }
    if (tk.is_punct("{")) {
      const int n = make(NodeType::Concat, "", parent);
      ++pos_;
      const int first = parse_ternary(n, nesting + 1);
      if (peek().is_punct("{")) {
        // replication {count{items}}
        t_.nodes[n].type = NodeType::Replication;
        const int inner = parse_primary(n, nesting + 1);
        (void)inner;
        (void)first;
      } else {
        while (accept_punct(",")) adopt(n, parse_ternary(n, nesting + 1));
      }
      if (!accept_punct("}")) {
        while (!at_end() && !peek().is_punct("}") && !peek().is_punct(";") &&
               !is_block_end(peek())) {
          ++pos_;
        }
        accept_punct("}");
      }
      close(n);
      return n;
    }
    // Unexpected token: zero-width opaque so callers can resynchronize.
    const int n = make(NodeType::Opaque, "", parent);
    close(n);
    return n;
  }

  SyntaxTree& t_;
  const std::vector<Token>& toks_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view to_string(NodeType t) { return kNodeNames[static_cast<std::size_t>(t)]; }

std::size_t SyntaxTree::count(NodeType t) const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [t](const Node& n) { return n.type == t; }));
}

int SyntaxTree::depth() const {
  if (nodes.empty()) return 0;
  int best = 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    for (int c : nodes[static_cast<std::size_t>(id)].children) stack.emplace_back(c, d + 1);
  }
  return best;
}

BalanceReport check_balance(const std::vector<Token>& tokens) {
  BalanceReport r;
  struct Class {
    std::vector<std::string_view> opens;
    std::string_view close;
    int depth = 0;
    bool bad = false;
    int first_open = -1;
  };
  std::array<Class, 6> classes{{{{"begin"}, "end"},
                                {{"case", "casez", "casex"}, "endcase"},
                                {{"fork"}, "join"},
                                {{"function"}, "endfunction"},
                                {{"task"}, "endtask"},
                                {{"generate"}, "endgenerate"}}};
  int module_depth = 0;
  int first_module_open = -1;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& tk = tokens[i];
    if (tk.kind != TokenKind::keyword) continue;
    if (tk.text == "module" || tk.text == "macromodule") {
      if (module_depth == 0) first_module_open = static_cast<int>(i);
      ++module_depth;
      ++r.module_opens;
      continue;
    }
    if (tk.text == "endmodule") {
      ++r.module_closes;
      if (module_depth == 0) {
        if (r.first_bad_module_token < 0) r.first_bad_module_token = static_cast<int>(i);
      } else {
        --module_depth;
        ++r.matched_modules;
      }
      continue;
    }
    for (std::size_t c = 0; c < classes.size(); ++c) {
      auto& cls = classes[c];
      if (std::find(cls.opens.begin(), cls.opens.end(), tk.text) != cls.opens.end()) {
        if (cls.depth == 0) cls.first_open = static_cast<int>(i);
        ++cls.depth;
      } else if (tk.text == cls.close) {
        if (cls.depth == 0) {
          cls.bad = true;
          if (c == 0 && r.first_bad_begin_token < 0) r.first_bad_begin_token = static_cast<int>(i);
        } else {
          --cls.depth;
        }
      }
    }
  }
  if (module_depth > 0 && r.first_bad_module_token < 0) r.first_bad_module_token = first_module_open;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    auto& cls = classes[c];
    if (cls.depth > 0) {
      cls.bad = true;
      if (c == 0 && r.first_bad_begin_token < 0) r.first_bad_begin_token = cls.first_open;
    }
    if (cls.bad) ++r.unbalanced_block_classes;
  }
  return r;
}

SyntaxTree parse_rtl(std::string_view source) {
  SyntaxTree tree;
  tree.tokens = tokenize(source);
  const BalanceReport bal = check_balance(tree.tokens);
  auto fail = [&](int tok, const char* what) {
    const Token& t = tree.tokens[static_cast<std::size_t>(tok)];
    throw ParseError(std::string(what) + " ('" + t.text + "')", t.line, t.col);
  };
  if (bal.first_bad_module_token >= 0) fail(bal.first_bad_module_token, "unbalanced module/endmodule");
  if (bal.first_bad_begin_token >= 0) fail(bal.first_bad_begin_token, "unbalanced begin/end");
  Parser(tree).run();
  return tree;
}

}  // namespace rtlguard
