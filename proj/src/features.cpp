#include "rtlguard/features.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <deque>
#include <functional>
#include <optional>
#include <set>

#include "rtlguard/embedding.hpp"
#include "rtlguard/io.hpp"
#include "rtlguard/rtl_parser.hpp"

namespace rtlguard {

namespace {

constexpr std::array<std::string_view, kFamilyCount> kFamilyNames{
    "semantic", "ast", "circuit", "connectivity", "timing",
    "patterns", "operators", "lexical", "graph"};

void bump(SparseFeatures& m, const std::string& key, double by = 1.0) {
  if (by == 0.0) return;
  m[key] += by;
}

void put(SparseFeatures& m, const std::string& key, double value) {
  if (value != 0.0) m[key] = value;
}

std::string_view op_group(std::string_view op, bool unary) {
  if (op == "?:") return "ternary";
  if (op == "&&" || op == "||" || op == "!") return "logical";
  if (op == "==" || op == "!=" || op == "===" || op == "!==" || op == "<" || op == "<=" ||
      op == ">" || op == ">=") {
    return "relational";
  }
  if (op == "<<" || op == ">>" || op == "<<<" || op == ">>>") return "shift";
  if (op == "+" || op == "-" || op == "*" || op == "/" || op == "%" || op == "**") {
    return "arithmetic";
  }
  (void)unary;
  return "bitwise";  // & | ^ ~ ~& ~| ~^ ^~ (binary or reduction)
}

/// Value of a Verilog integer literal when it contains no x/z digits.
std::optional<std::uint64_t> literal_value(std::string_view text) {
  std::string digits;
  int base = 10;
  auto tick = text.find('\'');
  if (tick != std::string_view::npos) {
    std::size_t i = tick + 1;
    if (i < text.size() && (text[i] == 's' || text[i] == 'S')) ++i;
    if (i >= text.size()) return std::nullopt;
    switch (std::tolower(static_cast<unsigned char>(text[i]))) {
      case 'b': base = 2; break;
      case 'o': base = 8; break;
      case 'd': base = 10; break;
      case 'h': base = 16; break;
      default: return std::nullopt;
    }
    text = text.substr(i + 1);
  }
  std::uint64_t v = 0;
  bool any = false;
  for (char c : text) {
    if (c == '_' || c == ' ' || c == '\t') continue;
    int d;
    if (std::isdigit(static_cast<unsigned char>(c))) {
      d = c - '0';
    } else if (std::isxdigit(static_cast<unsigned char>(c))) {
      d = std::tolower(static_cast<unsigned char>(c)) - 'a' + 10;
    } else {
      return std::nullopt;
    }
    if (d >= base) return std::nullopt;
    v = v * static_cast<std::uint64_t>(base) + static_cast<std::uint64_t>(d);
    any = true;
  }
  if (!any) return std::nullopt;
  return v;
}

bool is_one_hot(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

// ---------------------------------------------------------------------------
// Tree analysis

class TreeAnalysis {
 public:
  explicit TreeAnalysis(const SyntaxTree& tree) : t_(tree) {
    module_of_.assign(t_.nodes.size(), -1);
    always_of_.assign(t_.nodes.size(), -1);
    std::vector<std::pair<int, std::pair<int, int>>> stack{{0, {-1, -1}}};
    while (!stack.empty()) {
      auto [id, ctx] = stack.back();
      stack.pop_back();
      auto [mod, proc] = ctx;
      const Node& n = node(id);
      if (n.type == NodeType::Module) mod = id;
      if (n.type == NodeType::Always) proc = id;
      module_of_[static_cast<std::size_t>(id)] = mod;
      always_of_[static_cast<std::size_t>(id)] = proc;
      for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
        stack.push_back({*it, {mod, proc}});
      }
    }
    for (std::size_t i = 0; i < t_.nodes.size(); ++i) {
      if (t_.nodes[i].type == NodeType::Always && edge_triggered(static_cast<int>(i))) {
        edge_always_.insert(static_cast<int>(i));
      }
    }
    // Registered signals: assigned inside an edge-triggered always block.
    for (std::size_t i = 0; i < t_.nodes.size(); ++i) {
      const Node& n = t_.nodes[i];
      if (!is_assign(n.type)) continue;
      const int proc = always_of_[i];
      if (proc < 0 || !edge_always_.count(proc)) continue;
      for (const auto& name : lvalue_names(static_cast<int>(i))) {
        registered_.insert({module_of_[i], name});
      }
    }
  }

  const Node& node(int id) const { return t_.nodes[static_cast<std::size_t>(id)]; }
  int module_of(int id) const { return module_of_[static_cast<std::size_t>(id)]; }

  static bool is_assign(NodeType t) {
    return t == NodeType::BlockingAssign || t == NodeType::NonblockingAssign ||
           t == NodeType::ContinuousAssign;
  }

  bool edge_triggered(int always_id) const {
    const Node& al = node(always_id);
    if (al.text == "always_ff") return true;
    for (int c : al.children) {
      if (node(c).type != NodeType::EventControl) continue;
      for (int e : node(c).children) {
        if (node(e).text == "posedge" || node(e).text == "negedge") return true;
      }
    }
    return false;
  }

  bool is_edge_always(int id) const { return edge_always_.count(id) > 0; }

  /// Base identifiers written by an assignment's lvalue (first child).
  std::vector<std::string> lvalue_names(int assign_id) const {
    std::vector<std::string> out;
    for (int c : node(assign_id).children) {
      if (node(c).type == NodeType::Delay) continue;
      collect_lvalue(c, out);
      break;
    }
    return out;
  }

  /// Identifiers read by an assignment (everything after the lvalue).
  std::vector<std::string> rvalue_names(int assign_id) const {
    std::vector<std::string> out;
    bool seen_lhs = false;
    for (int c : node(assign_id).children) {
      if (node(c).type == NodeType::Delay) continue;
      if (!seen_lhs) {
        seen_lhs = true;
        continue;
      }
      collect_identifiers(c, out);
    }
    return out;
  }

  void collect_identifiers(int id, std::vector<std::string>& out) const {
    std::vector<int> stack{id};
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      const Node& n = node(cur);
      if (n.type == NodeType::Identifier) out.push_back(n.text);
      for (int c : n.children) stack.push_back(c);
    }
  }

  bool registered(int module, const std::string& name) const {
    return registered_.count({module, name}) > 0;
  }

  std::size_t registered_count() const { return registered_.size(); }

  const SyntaxTree& tree() const { return t_; }

 private:
  void collect_lvalue(int id, std::vector<std::string>& out) const {
    const Node& n = node(id);
    if (n.type == NodeType::Identifier) {
      out.push_back(n.text);
    } else if (n.type == NodeType::Select && !n.children.empty()) {
      collect_lvalue(n.children.front(), out);
    } else if (n.type == NodeType::Concat) {
      for (int c : n.children) collect_lvalue(c, out);
    }
  }

  const SyntaxTree& t_;
  std::vector<int> module_of_;
  std::vector<int> always_of_;
  std::set<int> edge_always_;
  std::set<std::pair<int, std::string>> registered_;
};

void ast_features(const TreeAnalysis& a, SparseFeatures& out) {
  const auto& nodes = a.tree().nodes;
  std::size_t edges = 0;
  for (const Node& n : nodes) {
    if (n.type != NodeType::Root) bump(out, "ast:" + std::string(to_string(n.type)));
    for (int c : n.children) {
      ++edges;
      bump(out, "ast2:" + std::string(to_string(n.type)) + "/" +
                    std::string(to_string(nodes[static_cast<std::size_t>(c)].type)));
    }
  }
  put(out, "ast:edges", static_cast<double>(edges));
  put(out, "ast:depth", static_cast<double>(a.tree().depth()));

  // Instantiation hierarchy depth among modules defined in this source.
  std::map<std::string, int> module_by_name;
  std::vector<int> modules;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].type != NodeType::Module) continue;
    modules.push_back(static_cast<int>(i));
    for (int c : nodes[i].children) {
      if (nodes[static_cast<std::size_t>(c)].type == NodeType::Identifier) {
        module_by_name.emplace(nodes[static_cast<std::size_t>(c)].text, static_cast<int>(i));
        break;
      }
    }
  }
  std::map<int, std::vector<int>> instantiates;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].type != NodeType::Instantiation || nodes[i].children.empty()) continue;
    const auto& type_name = nodes[static_cast<std::size_t>(nodes[i].children.front())].text;
    auto it = module_by_name.find(type_name);
    if (it != module_by_name.end()) instantiates[a.module_of(static_cast<int>(i))].push_back(it->second);
  }
  int hierarchy = 0;
  std::map<int, int> memo;
  std::function<int(int, int)> depth_of = [&](int m, int guard) -> int {
    if (guard > static_cast<int>(modules.size())) return 0;  // cycle
    auto it = memo.find(m);
    if (it != memo.end()) return it->second;
    int best = 0;
    for (int child : instantiates[m]) best = std::max(best, 1 + depth_of(child, guard + 1));
    memo[m] = best;
    return best;
  };
  for (int m : modules) hierarchy = std::max(hierarchy, depth_of(m, 0));
  put(out, "ast:inst_depth", hierarchy);
}

void circuit_features(const TreeAnalysis& a, SparseFeatures& out) {
  const auto& nodes = a.tree().nodes;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    switch (n.type) {
      case NodeType::Module: bump(out, "modules"); break;
      case NodeType::Always:
        bump(out, "always");
        bump(out, a.is_edge_always(static_cast<int>(i)) ? "always_ff" : "always_comb");
        break;
      case NodeType::Initial: bump(out, "initial"); break;
      case NodeType::Instantiation: bump(out, "instantiations"); break;
      case NodeType::ContinuousAssign: bump(out, "assigns"); break;
      default: break;
    }
  }
}

void connectivity_features(const TreeAnalysis& a, SparseFeatures& out) {
  double in = 0, outp = 0, inout = 0;
  auto tally = [&](const std::string& dir, double n) {
    if (dir == "input") in += n;
    if (dir == "output") outp += n;
    if (dir == "inout") inout += n;
  };
  for (const Node& n : a.tree().nodes) {
    if (n.type == NodeType::Port) {
      tally(n.text, 1);
    } else if (n.type == NodeType::PortDecl) {
      double names = 0;
      for (int c : n.children) {
        if (a.node(c).type == NodeType::Identifier) ++names;
      }
      tally(n.text, names);
    }
  }
  put(out, "inputs", in);
  put(out, "outputs", outp);
  put(out, "inouts", inout);
  put(out, "total", in + outp + inout);
  put(out, "io_ratio", in / std::max(1.0, outp));
}

void timing_features(const TreeAnalysis& a, SparseFeatures& out) {
  const auto& nodes = a.tree().nodes;
  std::map<int, std::set<std::string>> regs_by_block;
  std::map<int, std::vector<int>> assigns_by_block;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    switch (n.type) {
      case NodeType::If: bump(out, "if"); break;
      case NodeType::Block:
        if (n.text == "else") bump(out, "else");
        break;
      case NodeType::For: bump(out, "for"); break;
      case NodeType::Loop: bump(out, "loop"); break;
      case NodeType::Case: bump(out, "case"); break;
      case NodeType::Delay: bump(out, "delays"); break;
      case NodeType::NonblockingAssign: bump(out, "nonblocking"); break;
      case NodeType::BlockingAssign: bump(out, "blocking"); break;
      default: break;
    }
    if (n.type == NodeType::BlockingAssign || n.type == NodeType::NonblockingAssign) {
      // find enclosing edge-triggered always block
      int p = n.parent;
      while (p >= 0 && a.node(p).type != NodeType::Always) p = a.node(p).parent;
      if (p >= 0 && a.is_edge_always(p)) {
        for (auto& name : a.lvalue_names(static_cast<int>(i))) regs_by_block[p].insert(name);
        assigns_by_block[p].push_back(static_cast<int>(i));
      }
    }
  }
  put(out, "register_stages", static_cast<double>(a.registered_count()));

  // Registered signals chained reg->reg inside one always block.
  double chained = 0;
  for (const auto& [block, regs] : regs_by_block) {
    std::set<std::string> members;
    for (int as : assigns_by_block[block]) {
      const auto lhs = a.lvalue_names(as);
      for (const auto& src : a.rvalue_names(as)) {
        if (!regs.count(src)) continue;
        for (const auto& dst : lhs) {
          if (dst == src) continue;
          members.insert(src);
          members.insert(dst);
        }
      }
    }
    chained += static_cast<double>(members.size());
  }
  put(out, "pipeline_stages", chained);
}

void pattern_features(const TreeAnalysis& a, SparseFeatures& out) {
  const auto& nodes = a.tree().nodes;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    if (n.type == NodeType::Ternary) bump(out, "mux");
    if (n.type == NodeType::Case) {
      bool has_default = false;
      int arms = 0;
      bool all_one_hot = true;
      for (int c : n.children) {
        const Node& item = a.node(c);
        if (item.type != NodeType::CaseItem) continue;
        if (item.text == "default") {
          has_default = true;
          continue;
        }
        ++arms;
        // the arm statement is the last child; expect `lhs = constant`
        const Node* stmt = item.children.empty() ? nullptr : &a.node(item.children.back());
        bool one_hot = false;
        if (stmt && TreeAnalysis::is_assign(stmt->type) && stmt->children.size() >= 2) {
          const Node& rhs = a.node(stmt->children.back());
          if (rhs.type == NodeType::Number) {
            auto v = literal_value(rhs.text);
            one_hot = v && is_one_hot(*v);
          }
        }
        all_one_hot = all_one_hot && one_hot;
      }
      if (arms >= 2 && all_one_hot) {
        bump(out, "decoder");
      } else if (has_default) {
        bump(out, "mux");
      }
    }
    if (n.type == NodeType::BinaryOp &&
        (n.text == "<<" || n.text == ">>" || n.text == "<<<" || n.text == ">>>") &&
        !n.children.empty()) {
      int lhs = n.children.front();
      while (a.node(lhs).type == NodeType::Select && !a.node(lhs).children.empty()) {
        lhs = a.node(lhs).children.front();
      }
      if (a.node(lhs).type == NodeType::Identifier &&
          a.registered(a.module_of(static_cast<int>(i)), a.node(lhs).text)) {
        bump(out, "shifter");
      }
    }
  }
}

void operator_features(const TreeAnalysis& a, SparseFeatures& out) {
  for (const Node& n : a.tree().nodes) {
    if (n.type == NodeType::BinaryOp) {
      bump(out, "op:" + n.text);
      bump(out, "group:" + std::string(op_group(n.text, false)));
    } else if (n.type == NodeType::UnaryOp) {
      bump(out, "op:u" + n.text);
      bump(out, "group:" + std::string(op_group(n.text, true)));
    } else if (n.type == NodeType::Ternary) {
      bump(out, "op:?:");
      bump(out, "group:ternary");
    }
  }
}

/// Combined control/data-flow graph over signals, processes and control
/// statements. Signals are identified by (module, name).
void graph_features(const TreeAnalysis& a, SparseFeatures& out) {
  const auto& nodes = a.tree().nodes;
  std::map<std::pair<int, std::string>, int> signal_ids;
  std::vector<std::set<int>> adj;
  auto new_node = [&]() {
    adj.emplace_back();
    return static_cast<int>(adj.size() - 1);
  };
  auto signal = [&](int module, const std::string& name) {
    auto [it, inserted] = signal_ids.try_emplace({module, name}, 0);
    if (inserted) it->second = new_node();
    return it->second;
  };
  auto edge = [&](int from, int to) {
    if (from != to) adj[static_cast<std::size_t>(from)].insert(to);
  };

  // Declared signals become nodes even if unused.
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    if (n.type == NodeType::Port || n.type == NodeType::PortDecl || n.type == NodeType::NetDecl ||
        n.type == NodeType::RegDecl || n.type == NodeType::VarDecl) {
      for (int c : n.children) {
        if (a.node(c).type == NodeType::Identifier) signal(a.module_of(static_cast<int>(i)), a.node(c).text);
      }
    }
  }

  std::map<int, int> proc_node;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    const int mod = a.module_of(static_cast<int>(i));
    const int id = static_cast<int>(i);
    if (n.type == NodeType::ContinuousAssign || n.type == NodeType::Always ||
        n.type == NodeType::Initial || n.type == NodeType::Instantiation) {
      proc_node[id] = new_node();
    }
    if (n.type == NodeType::If || n.type == NodeType::Case || n.type == NodeType::For ||
        n.type == NodeType::Loop) {
      proc_node[id] = new_node();
    }
    (void)mod;
  }
  auto enclosing_proc = [&](int id) {
    int p = a.node(id).parent;
    while (p >= 0 && !proc_node.count(p)) p = a.node(p).parent;
    return p;
  };

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    const int id = static_cast<int>(i);
    const int mod = a.module_of(id);
    if (TreeAnalysis::is_assign(n.type)) {
      const int owner = n.type == NodeType::ContinuousAssign ? id : enclosing_proc(id);
      if (owner < 0) continue;
      const int pn = proc_node[owner];
      for (const auto& r : a.rvalue_names(id)) edge(signal(mod, r), pn);
      for (const auto& w : a.lvalue_names(id)) {
        edge(pn, signal(mod, w));
        // control dependence: every enclosing control statement drives the target
        for (int p = enclosing_proc(id); p >= 0 && a.node(p).type != NodeType::Always &&
                                         a.node(p).type != NodeType::Initial;
             p = enclosing_proc(p)) {
          edge(proc_node[p], signal(mod, w));
        }
      }
    } else if (n.type == NodeType::If || n.type == NodeType::Case || n.type == NodeType::Loop ||
               n.type == NodeType::For) {
      const int pn = proc_node[id];
      // condition / selector expression is the first child
      if (!n.children.empty() && n.type != NodeType::For) {
        std::vector<std::string> reads;
        a.collect_identifiers(n.children.front(), reads);
        for (const auto& r : reads) edge(signal(mod, r), pn);
      }
      const int owner = enclosing_proc(id);
      if (owner >= 0) edge(proc_node[owner], pn);
    } else if (n.type == NodeType::EventExpr) {
      const int owner = enclosing_proc(id);
      if (owner < 0) continue;
      std::vector<std::string> reads;
      for (int c : n.children) a.collect_identifiers(c, reads);
      for (const auto& r : reads) edge(signal(mod, r), proc_node[owner]);
    } else if (n.type == NodeType::Instantiation) {
      const int pn = proc_node[id];
      for (int c : n.children) {
        if (a.node(c).type != NodeType::PortConnection) continue;
        std::vector<std::string> reads;
        const auto& pc = a.node(c);
        // skip the formal port name (first Identifier child when dotted)
        for (std::size_t k = 0; k < pc.children.size(); ++k) {
          if (k == 0 && pc.children.size() > 1 && a.node(pc.children[0]).type == NodeType::Identifier) continue;
          a.collect_identifiers(pc.children[k], reads);
        }
        for (const auto& r : reads) edge(signal(mod, r), pn);
      }
    }
  }

  const std::size_t n_nodes = adj.size();
  std::size_t n_edges = 0;
  std::vector<int> indegree(n_nodes, 0);
  for (const auto& succ : adj) {
    n_edges += succ.size();
    for (int s : succ) ++indegree[static_cast<std::size_t>(s)];
  }
  put(out, "nodes", static_cast<double>(n_nodes));
  put(out, "edges", static_cast<double>(n_edges));
  if (n_nodes >= 2) {
    put(out, "density", static_cast<double>(n_edges) /
                            (static_cast<double>(n_nodes) * static_cast<double>(n_nodes - 1)));
  }
  // Longest BFS level from all sources (indegree 0).
  std::vector<int> level(n_nodes, -1);
  std::deque<int> q;
  for (std::size_t i = 0; i < n_nodes; ++i) {
    if (indegree[i] == 0) {
      level[i] = 0;
      q.push_back(static_cast<int>(i));
    }
  }
  int depth = 0;
  while (!q.empty()) {
    const int cur = q.front();
    q.pop_front();
    depth = std::max(depth, level[static_cast<std::size_t>(cur)]);
    for (int s : adj[static_cast<std::size_t>(cur)]) {
      if (level[static_cast<std::size_t>(s)] < 0) {
        level[static_cast<std::size_t>(s)] = level[static_cast<std::size_t>(cur)] + 1;
        q.push_back(s);
      }
    }
  }
  put(out, "depth", depth);
}

// ---------------------------------------------------------------------------
// Token-level features (always lexical; everything when parsing fails)

std::string naming_style(std::string_view id) {
  bool lower = false, upper = false, underscore = false;
  for (char c : id) {
    if (std::islower(static_cast<unsigned char>(c))) lower = true;
    if (std::isupper(static_cast<unsigned char>(c))) upper = true;
    if (c == '_') underscore = true;
  }
  if (upper && !lower) return "upper";
  if (lower && !upper) return underscore ? "snake" : "lower";
  if (underscore) return "mixed";
  return std::isupper(static_cast<unsigned char>(id.front())) ? "pascal" : "camel";
}

void lexical_features(const std::vector<Token>& tokens, std::size_t cap, SparseFeatures& out) {
  std::map<std::string, int> freq;
  std::size_t n_ident = 0;
  for (const Token& t : tokens) {
    if (t.kind != TokenKind::identifier) continue;
    ++freq[t.text];
    ++n_ident;
  }
  std::vector<std::pair<std::string, int>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  for (std::size_t i = 0; i < ranked.size() && i < cap; ++i) {
    put(out, "id:" + ranked[i].first, ranked[i].second);
  }
  for (const auto& [name, count] : freq) {
    bump(out, "style:" + naming_style(name));
    auto first = name.find('_');
    if (first != std::string::npos && first > 0 && first <= 3) {
      bump(out, "prefix:" + name.substr(0, first + 1));
    }
    auto last = name.rfind('_');
    if (last != std::string::npos && last + 1 < name.size() && name.size() - last - 1 <= 3 &&
        last > 0) {
      bump(out, "suffix:" + name.substr(last));
    }
    (void)count;
  }
  put(out, "distinct_ids", static_cast<double>(freq.size()));
  if (!tokens.empty()) {
    put(out, "id_token_ratio", static_cast<double>(n_ident) / static_cast<double>(tokens.size()));
  }
}

void token_level_structure(const std::vector<Token>& tokens, FeatureBundle& b) {
  for (const Token& t : tokens) {
    if (t.kind == TokenKind::keyword) {
      const std::string& k = t.text;
      if (k == "module" || k == "macromodule") bump(b.circuit, "modules");
      if (k.starts_with("always")) bump(b.circuit, "always");
      if (k == "initial") bump(b.circuit, "initial");
      if (k == "assign") bump(b.circuit, "assigns");
      if (k == "input") bump(b.connectivity, "inputs");
      if (k == "output") bump(b.connectivity, "outputs");
      if (k == "inout") bump(b.connectivity, "inouts");
      if (k == "if") bump(b.timing, "if");
      if (k == "else") bump(b.timing, "else");
      if (k == "for") bump(b.timing, "for");
      if (k == "case" || k == "casez" || k == "casex") bump(b.timing, "case");
      if (k == "while" || k == "repeat" || k == "forever") bump(b.timing, "loop");
    } else if (t.kind == TokenKind::op) {
      if (t.text == "#") {
        bump(b.timing, "delays");
      } else if (t.text == "?") {
        bump(b.patterns, "mux");
        bump(b.operators, "op:?:");
        bump(b.operators, "group:ternary");
      } else if (t.text == "<=") {
        bump(b.timing, "nonblocking");
      } else if (t.text != "=" && t.text != ":" && t.text != "@" && t.text != "+:" &&
                 t.text != "-:" && t.text != "->") {
        bump(b.operators, "op:" + t.text);
        bump(b.operators, "group:" + std::string(op_group(t.text, false)));
      }
    }
  }
  auto get = [&](const SparseFeatures& m, const char* k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
  };
  const double in = get(b.connectivity, "inputs");
  const double out = get(b.connectivity, "outputs");
  const double io = get(b.connectivity, "inouts");
  put(b.connectivity, "total", in + out + io);
  put(b.connectivity, "io_ratio", in / std::max(1.0, out));
}

}  // namespace

std::string_view to_string(Family f) { return kFamilyNames[static_cast<std::size_t>(f)]; }

Family parse_family(std::string_view name) {
  for (std::size_t i = 0; i < kFamilyNames.size(); ++i) {
    if (kFamilyNames[i] == name) return static_cast<Family>(i);
  }
  throw ConfigError("unknown feature family '" + std::string(name) + "'");
}

const SparseFeatures& FeatureBundle::sparse(Family f) const {
  return const_cast<FeatureBundle*>(this)->sparse(f);
}

SparseFeatures& FeatureBundle::sparse(Family f) {
  switch (f) {
    case Family::ast: return ast;
    case Family::circuit: return circuit;
    case Family::connectivity: return connectivity;
    case Family::timing: return timing;
    case Family::patterns: return patterns;
    case Family::operators: return operators;
    case Family::lexical: return lexical;
    case Family::graph: return graph;
    case Family::semantic: break;
  }
  throw Error("semantic family is dense");
}

PrecomputedVectors parse_precomputed_vectors(std::string_view text) {
  PrecomputedVectors table;
  std::size_t lineno = 0;
  for (auto line : io::lines(text)) {
    ++lineno;
    if (io::trim(line).empty()) continue;
    auto fields = io::split(line, '\t');
    const std::string where = "vector file line " + std::to_string(lineno) + ": ";
    if (fields.size() != 3) throw FormatError(where + "expected id<TAB>d<TAB>values");
    const auto d = static_cast<std::size_t>(io::parse_int(fields[1]));
    auto values = io::split_doubles(fields[2]);
    if (values.size() != d) {
      throw DimensionError(where + "declared dimension " + std::to_string(d) + " but " +
                           std::to_string(values.size()) + " values");
    }
    if (table.vectors.empty()) {
      table.dim = d;
    } else if (d != table.dim) {
      throw DimensionError(where + "dimension " + std::to_string(d) + " differs from " +
                           std::to_string(table.dim));
    }
    if (!table.vectors.emplace(std::string(fields[0]), std::move(values)).second) {
      throw FormatError(where + "duplicate id '" + std::string(fields[0]) + "'");
    }
  }
  return table;
}

PrecomputedVectors load_precomputed_vectors(const std::filesystem::path& path) {
  return parse_precomputed_vectors(io::read_file(path));
}

std::string format_precomputed_vectors(const PrecomputedVectors& table) {
  std::string out;
  for (const auto& [id, v] : table.vectors) {
    out += id + "\t" + std::to_string(v.size()) + "\t" + io::join_doubles(v) + "\n";
  }
  return out;
}

SemanticProvider SemanticProvider::hashed_ngram(std::size_t dim) {
  if (dim == 0) throw ConfigError("semantic dimension must be >= 1");
  SemanticProvider p;
  p.kind_ = Kind::hashed_ngram;
  p.dim_ = dim;
  return p;
}

SemanticProvider SemanticProvider::precomputed(PrecomputedVectors table) {
  SemanticProvider p;
  p.kind_ = Kind::precomputed;
  p.dim_ = table.dim;
  p.table_ = std::make_shared<const PrecomputedVectors>(std::move(table));
  return p;
}

std::vector<double> semantic_vector(std::string_view source, const SemanticProvider& provider,
                                    std::string_view doc_id) {
  if (provider.kind() == SemanticProvider::Kind::precomputed) {
    auto it = provider.table()->vectors.find(std::string(doc_id));
    if (it == provider.table()->vectors.end()) {
      throw ProviderError("no precomputed semantic vector for id '" + std::string(doc_id) + "'");
    }
    return it->second;
  }
  std::vector<double> out(provider.dim(), 0.0);
  for (std::size_t i = 0; i + 3 <= source.size(); ++i) hash_into(source.substr(i, 3), 1.0, out);
  return out;
}

FeatureBundle extract_bundle(std::string_view source, const SemanticProvider& provider,
                             std::string_view doc_id, const ExtractOptions& options) {
  FeatureBundle b;
  b.semantic = semantic_vector(source, provider, doc_id);
  std::vector<Token> tokens;
  try {
    const SyntaxTree tree = parse_rtl(source);
    const TreeAnalysis analysis(tree);
    ast_features(analysis, b.ast);
    circuit_features(analysis, b.circuit);
    connectivity_features(analysis, b.connectivity);
    timing_features(analysis, b.timing);
    pattern_features(analysis, b.patterns);
    operator_features(analysis, b.operators);
    graph_features(analysis, b.graph);
    tokens = tree.tokens;
  } catch (const ParseError&) {
    b.parse_failed = true;
    tokens = tokenize(source);
    token_level_structure(tokens, b);
  }
  lexical_features(tokens, options.identifier_cap, b.lexical);
  return b;
}

}  // namespace rtlguard
