#include "rtlguard/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "rtlguard/error.hpp"
#include "rtlguard/io.hpp"
#include "rtlguard/rng.hpp"

namespace rtlguard {

namespace {

constexpr std::array<std::string_view, 6> kCategoryNames{
    "combinational", "sequential", "routing", "arithmetic", "crypto", "other"};
constexpr std::array<std::string_view, 4> kSubsetNames{
    "non_sensitive", "proprietary_marked", "diagnostic", "test"};

}  // namespace

std::string_view to_string(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(Subset s) { return kSubsetNames[static_cast<std::size_t>(s)]; }

Category parse_category(std::string_view text) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == text) return static_cast<Category>(i);
  }
  throw ConfigError("unknown category label '" + std::string(text) + "'");
}

Subset parse_subset(std::string_view text) {
  for (std::size_t i = 0; i < kSubsetNames.size(); ++i) {
    if (kSubsetNames[i] == text) return static_cast<Subset>(i);
  }
  throw ConfigError("unknown subset label '" + std::string(text) + "'");
}

std::array<std::size_t, 4> CorpusManifest::subset_counts() const {
  std::array<std::size_t, 4> counts{};
  for (const auto& e : entries) ++counts[static_cast<std::size_t>(e.subset)];
  return counts;
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw ConfigError("manifest not found: " + path.string());
  const std::string text = io::read_file(path);

  CorpusManifest manifest;
  manifest.base_dir = path.parent_path();
  std::unordered_set<std::string> ids;
  std::set<fs::path> diagnostic_paths;
  std::set<fs::path> training_paths;

  std::size_t lineno = 0;
  for (auto line : io::lines(text)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto body = io::trim(line.substr(1));
      if (body.starts_with("seed ")) {
        manifest.seed = static_cast<std::uint64_t>(io::parse_int(body.substr(5)));
      }
      continue;
    }
    auto fields = io::split(line, '\t');
    if (fields.size() != 4) throw ConfigError(where + "expected 4 tab-separated fields");
    ManifestEntry entry;
    entry.id = std::string(fields[0]);
    entry.path = fs::path(std::string(fields[1]));
    try {
      entry.category = parse_category(fields[2]);
      entry.subset = parse_subset(fields[3]);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    if (entry.id.empty()) throw ConfigError(where + "empty id");
    if (!ids.insert(entry.id).second) throw ConfigError(where + "duplicate id '" + entry.id + "'");

    const fs::path resolved = manifest.base_dir / entry.path;
    std::ifstream probe(resolved, std::ios::binary);
    if (!fs::is_regular_file(resolved) || !probe) {
      throw ConfigError(where + "unresolvable path '" + resolved.string() + "'");
    }
    const auto canonical = fs::weakly_canonical(resolved);
    if (entry.subset == Subset::diagnostic) {
      diagnostic_paths.insert(canonical);
    } else if (entry.subset == Subset::non_sensitive || entry.subset == Subset::proprietary_marked) {
      training_paths.insert(canonical);
    }
    manifest.entries.push_back(std::move(entry));
  }
  for (const auto& p : diagnostic_paths) {
    if (training_paths.count(p)) {
      throw ConfigError("diagnostic file also listed in a training subset: " + p.string());
    }
  }
  return manifest;
}

std::string format_manifest(const CorpusManifest& manifest) {
  std::ostringstream out;
  out << "# id\tpath\tcategory\tsubset\n";
  out << "# seed " << manifest.seed << "\n";
  for (const auto& e : manifest.entries) {
    out << e.id << '\t' << e.path.generic_string() << '\t' << to_string(e.category) << '\t'
        << to_string(e.subset) << '\n';
  }
  return out.str();
}

std::vector<RtlDocument> load_documents(const CorpusManifest& manifest) {
  std::vector<RtlDocument> docs;
  docs.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    RtlDocument doc{e.id, io::read_file(manifest.base_dir / e.path), e.category, e.subset};
    if (doc.source.empty()) throw ConfigError("empty source for id '" + e.id + "'");
    docs.push_back(std::move(doc));
  }
  return docs;
}

Partition partition(std::span<const RtlDocument> corpus, const PartitionSpec& spec,
                    std::uint64_t seed) {
  const std::size_t wanted = spec.non_sensitive + spec.proprietary + spec.diagnostic;
  if (wanted > corpus.size()) {
    throw ConfigError("partition asks for " + std::to_string(wanted) + " documents but corpus has " +
                      std::to_string(corpus.size()));
  }
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  Partition out;
  std::size_t cursor = 0;
  auto take = [&](std::size_t n, Subset label, std::vector<RtlDocument>& dst) {
    for (std::size_t i = 0; i < n; ++i) {
      RtlDocument doc = corpus[order[cursor++]];
      doc.subset = label;
      dst.push_back(std::move(doc));
    }
  };
  take(spec.diagnostic, Subset::diagnostic, out.diagnostic);
  take(spec.proprietary, Subset::proprietary_marked, out.proprietary);
  take(spec.non_sensitive, Subset::non_sensitive, out.non_sensitive);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic RTL generator

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const std::vector<std::string> kModulePrefixes{
    "alu",  "ctl", "dp",   "core", "bus",  "mem",  "io",   "dsp", "sys", "pcie",
    "dma",  "uart", "spi", "eth",  "gpu",  "npu",  "acc",  "fab", "soc", "tile"};
const std::vector<std::string> kModuleNouns{
    "logic", "unit", "blk", "gate", "path", "ctrl", "slice", "cell", "lane", "stage",
    "node",  "hub",  "port", "mix",  "core", "fsm",  "engine", "glue", "xform", "tap"};
const std::vector<std::string> kSignalBases{
    "data", "mask", "key", "val", "src", "dst", "addr", "flag", "bits", "word",
    "opnd", "tag",  "cfg", "lhs", "rhs", "sum",  "acc",  "pat",  "mode", "ref"};

struct Namer {
  Rng& rng;
  int style;  // 0 plain, 1 i_/o_ prefix, 2 _in/_out suffix, 3 camel
  std::vector<std::string> pool;
  std::size_t next = 0;

  Namer(Rng& r) : rng(r), style(static_cast<int>(r.below(4))), pool(kSignalBases) {
    rng.shuffle(pool);
  }

  std::string base() {
    std::string b = pool[next % pool.size()];
    if (next >= pool.size()) b += std::to_string(next / pool.size());
    ++next;
    return b;
  }

  std::string input() {
    auto b = base();
    switch (style) {
      case 1: return "i_" + b;
      case 2: return b + "_in";
      case 3: return "in" + std::string(1, static_cast<char>(b[0] - 32)) + b.substr(1);
      default: return b;
    }
  }
  std::string output() {
    auto b = base();
    switch (style) {
      case 1: return "o_" + b;
      case 2: return b + "_out";
      case 3: return "out" + std::string(1, static_cast<char>(b[0] - 32)) + b.substr(1);
      default: return b + "_o";
    }
  }
  std::string wire() {
    auto b = base();
    return style == 3 ? "tmp" + std::string(1, static_cast<char>(b[0] - 32)) + b.substr(1)
                      : "w_" + b;
  }
  std::string reg() {
    auto b = base();
    return style == 3 ? "reg" + std::string(1, static_cast<char>(b[0] - 32)) + b.substr(1)
                      : b + "_q";
  }
};

std::string module_name(Rng& rng, std::size_t index) {
  return rng.pick(kModulePrefixes) + "_" + rng.pick(kModuleNouns) + "_" + std::to_string(index);
}

std::string range(int width) { return "[" + std::to_string(width - 1) + ":0] "; }

int pick_width(Rng& rng) {
  static const std::vector<int> widths{4, 8, 12, 16, 24, 32};
  return rng.pick(widths);
}

struct Emitter {
  std::ostringstream out;
  ConstructCounts truth;
};

void emit_ports(Emitter& e, const std::vector<std::string>& decls) {
  e.out << "(\n";
  for (std::size_t i = 0; i < decls.size(); ++i) {
    e.out << "  " << decls[i] << (i + 1 < decls.size() ? ",\n" : "\n");
  }
  e.out << ");\n";
}

SynthDocument gen_combinational(Rng& rng, std::size_t index) {
  Emitter e;
  Namer names(rng);
  const std::string name = module_name(rng, index);
  const int width = pick_width(rng);
  const int n_vec_in = rng.range(2, 4);
  const bool scalar_in = rng.chance(0.5);
  const int n_wires = rng.range(1, 3);
  const bool scalar_out = rng.chance(0.6);

  std::vector<std::string> vec_inputs, decls;
  for (int i = 0; i < n_vec_in; ++i) {
    vec_inputs.push_back(names.input());
    decls.push_back("input  " + range(width) + vec_inputs.back());
  }
  std::string sin;
  if (scalar_in) {
    sin = names.input();
    decls.push_back("input  " + sin);
  }
  const std::string vout = names.output();
  decls.push_back("output " + range(width) + vout);
  std::string sout;
  if (scalar_out) {
    sout = names.output();
    decls.push_back("output " + sout);
  }
  e.truth.inputs = n_vec_in + (scalar_in ? 1 : 0);
  e.truth.outputs = 1 + (scalar_out ? 1 : 0);

  e.out << "// " << name << ": gate-level mix, " << width << "-bit\n";
  e.out << "module " << name << " ";
  emit_ports(e, decls);

  static const std::vector<std::string> binops{"&", "|", "^", "+", "-", "&", "|", "^"};
  std::vector<std::string> avail = vec_inputs;
  auto operand = [&]() {
    std::string s = rng.pick(avail);
    if (rng.chance(0.25)) s = "~" + s;
    return s;
  };
  std::vector<std::string> wires;
  for (int i = 0; i < n_wires; ++i) wires.push_back(names.wire());
  for (const auto& w : wires) e.out << "  wire " << range(width) << w << ";\n";
  for (const auto& w : wires) {
    std::string expr = operand() + " " + rng.pick(binops) + " " + operand();
    if (rng.chance(0.4)) expr = "(" + expr + ") " + rng.pick(binops) + " " + operand();
    e.out << "  assign " << w << " = " << expr << ";\n";
    ++e.truth.continuous_assigns;
    avail.push_back(w);
  }
  e.out << "  assign " << vout << " = " << wires.back() << " " << rng.pick(binops) << " "
        << operand() << ";\n";
  ++e.truth.continuous_assigns;
  if (scalar_out) {
    static const std::vector<std::string> reductions{"&", "|", "^"};
    std::string expr = rng.pick(reductions) + wires.front();
    if (scalar_in) expr += (rng.chance(0.5) ? " & " : " | ") + sin;
    e.out << "  assign " << sout << " = " << expr << ";\n";
    ++e.truth.continuous_assigns;
  }
  e.out << "endmodule\n";
  e.truth.modules = 1;
  return {RtlDocument{"", e.out.str(), Category::combinational, Subset::test}, e.truth, "gates"};
}

struct ClockReset {
  std::string clk, rst;
  bool active_low = false;
};

ClockReset pick_clock(Rng& rng) {
  static const std::vector<std::string> clks{"clk", "clock", "i_clk", "clk_sys"};
  static const std::vector<std::string> rsts{"rst", "reset", "rst_n", "arst_n"};
  ClockReset cr{rng.pick(clks), rng.pick(rsts)};
  cr.active_low = cr.rst.ends_with("_n");
  return cr;
}

std::string reset_cond(const ClockReset& cr) { return cr.active_low ? "!" + cr.rst : cr.rst; }

SynthDocument gen_sequential(Rng& rng, std::size_t index) {
  Emitter e;
  Namer names(rng);
  const std::string name = module_name(rng, index);
  const ClockReset cr = pick_clock(rng);
  const int kind = static_cast<int>(rng.below(3));
  std::string kind_name;
  const int width = pick_width(rng);

  e.truth.modules = 1;
  if (kind == 0) {
    kind_name = "counter";
    const std::string en = names.input();
    const std::string cnt = names.reg();
    const bool down = rng.chance(0.3);
    const int step = rng.range(1, 3);
    e.out << "// " << name << ": " << (down ? "down" : "up") << "-counter\n";
    e.out << "module " << name << " #(parameter WIDTH = " << width << ") ";
    emit_ports(e, {"input  " + cr.clk, "input  " + cr.rst, "input  " + en,
                   "output reg [WIDTH-1:0] " + cnt});
    e.out << "  always @(posedge " << cr.clk << ") begin\n";
    e.out << "    if (" << reset_cond(cr) << ")\n";
    e.out << "      " << cnt << " <= 0;\n";
    e.out << "    else if (" << en << ")\n";
    e.out << "      " << cnt << " <= " << cnt << (down ? " - " : " + ") << step << ";\n";
    e.out << "  end\n";
    e.truth.always_blocks = 1;
    e.truth.inputs = 3;
    e.truth.outputs = 1;
  } else if (kind == 1) {
    kind_name = "shifter";
    const std::string din = names.input();
    const std::string q = names.reg();
    const std::string dout = names.output();
    const int style = static_cast<int>(rng.below(3));
    e.out << "// " << name << ": " << width << "-bit shift register\n";
    e.out << "module " << name << " ";
    emit_ports(e, {"input  " + cr.clk, "input  " + cr.rst, "input  " + din,
                   "output " + dout});
    e.out << "  reg " << range(width) << q << ";\n";
    e.out << "  always @(posedge " << cr.clk << ") begin\n";
    e.out << "    if (" << reset_cond(cr) << ")\n";
    e.out << "      " << q << " <= 0;\n";
    e.out << "    else\n";
    if (style == 0) {
      e.out << "      " << q << " <= {" << q << "[" << width - 2 << ":0], " << din << "};\n";
    } else if (style == 1) {
      e.out << "      " << q << " <= (" << q << " << 1) | " << din << ";\n";
    } else {
      e.out << "      " << q << " <= (" << q << " >> 1) | (" << din << " << " << width - 1
            << ");\n";
    }
    e.out << "  end\n";
    e.out << "  assign " << dout << " = " << q << "[" << (style == 2 ? 0 : width - 1) << "];\n";
    e.truth.always_blocks = 1;
    e.truth.continuous_assigns = 1;
    e.truth.inputs = 3;
    e.truth.outputs = 1;
  } else {
    const int stages = rng.range(2, 4);
    const bool split_blocks = rng.chance(0.6);
    kind_name = "pipeline" + std::to_string(stages);
    const std::string din = names.input();
    const std::string dout = names.output();
    std::vector<std::string> regs;
    for (int i = 0; i < stages; ++i) regs.push_back(names.reg());
    e.out << "// " << name << ": " << stages << "-stage pipelined register file\n";
    e.out << "module " << name << " ";
    emit_ports(e, {"input  " + cr.clk, "input  " + range(width) + din,
                   "output " + range(width) + dout});
    for (const auto& r : regs) e.out << "  reg " << range(width) << r << ";\n";
    if (split_blocks) {
      for (int i = 0; i < stages; ++i) {
        e.out << "  always @(posedge " << cr.clk << ")\n";
        e.out << "    " << regs[i] << " <= " << (i == 0 ? din : regs[i - 1]) << ";\n";
      }
      e.truth.always_blocks = stages;
    } else {
      e.out << "  always @(posedge " << cr.clk << ") begin\n";
      for (int i = 0; i < stages; ++i) {
        e.out << "    " << regs[i] << " <= " << (i == 0 ? din : regs[i - 1]) << ";\n";
      }
      e.out << "  end\n";
      e.truth.always_blocks = 1;
    }
    e.out << "  assign " << dout << " = " << regs.back() << ";\n";
    e.truth.continuous_assigns = 1;
    e.truth.inputs = 2;
    e.truth.outputs = 1;
  }
  e.out << "endmodule\n";
  return {RtlDocument{"", e.out.str(), Category::sequential, Subset::test}, e.truth, kind_name};
}

SynthDocument gen_routing(Rng& rng, std::size_t index) {
  Emitter e;
  Namer names(rng);
  const std::string name = module_name(rng, index);
  const int kind = static_cast<int>(rng.below(4));
  const int width = pick_width(rng);
  std::string kind_name;
  e.truth.modules = 1;

  if (kind == 0) {
    kind_name = "mux2";
    const std::string a = names.input(), b = names.input(), sel = names.input(),
                      y = names.output();
    e.out << "// " << name << ": 2-to-1 multiplexer\n";
    e.out << "module " << name << " ";
    emit_ports(e, {"input  " + range(width) + a, "input  " + range(width) + b,
                   "input  " + sel, "output " + range(width) + y});
    e.out << "  assign " << y << " = " << sel << " ? " << a << " : " << b << ";\n";
    e.truth.continuous_assigns = 1;
    e.truth.inputs = 3;
    e.truth.outputs = 1;
  } else if (kind == 1) {
    kind_name = "mux4";
    std::vector<std::string> ins;
    for (int i = 0; i < 4; ++i) ins.push_back(names.input());
    const std::string sel = names.input(), y = names.output();
    e.out << "// " << name << ": 4-way selector\n";
    e.out << "module " << name << " ";
    std::vector<std::string> decls;
    for (const auto& in : ins) decls.push_back("input  " + range(width) + in);
    decls.push_back("input  [1:0] " + sel);
    decls.push_back("output reg " + range(width) + y);
    emit_ports(e, decls);
    e.out << "  always @(*) begin\n";
    e.out << "    case (" << sel << ")\n";
    for (int i = 0; i < 3; ++i) {
      e.out << "      2'd" << i << ": " << y << " = " << ins[i] << ";\n";
    }
    e.out << "      default: " << y << " = " << ins[3] << ";\n";
    e.out << "    endcase\n";
    e.out << "  end\n";
    e.truth.always_blocks = 1;
    e.truth.inputs = 5;
    e.truth.outputs = 1;
  } else if (kind == 2) {
    kind_name = "decoder";
    const int sel_bits = rng.range(2, 3);
    const int outs = 1 << sel_bits;
    const std::string sel = names.input(), y = names.output();
    e.out << "// " << name << ": " << sel_bits << "-to-" << outs << " one-hot decoder\n";
    e.out << "module " << name << " ";
    emit_ports(e, {"input  " + range(sel_bits) + sel, "output reg " + range(outs) + y});
    e.out << "  always @(*) begin\n";
    e.out << "    case (" << sel << ")\n";
    for (int i = 0; i < outs; ++i) {
      std::string bits(static_cast<std::size_t>(outs), '0');
      bits[static_cast<std::size_t>(outs - 1 - i)] = '1';
      e.out << "      " << sel_bits << "'d" << i << ": " << y << " = " << outs << "'b" << bits
            << ";\n";
    }
    e.out << "    endcase\n";
    e.out << "  end\n";
    e.truth.always_blocks = 1;
    e.truth.inputs = 1;
    e.truth.outputs = 1;
  } else {
    kind_name = "crossbar";
    const std::string i0 = names.input(), i1 = names.input(), sel = names.input(),
                      o0 = names.output(), o1 = names.output();
    const std::string cell = name + "_cell";
    e.out << "// " << name << ": 2x2 crossbar from mux cells\n";
    e.out << "module " << cell << " (input [" << width - 1 << ":0] a, input [" << width - 1
          << ":0] b, input s, output [" << width - 1 << ":0] y);\n";
    e.out << "  assign y = s ? b : a;\n";
    e.out << "endmodule\n\n";
    e.out << "module " << name << " ";
    emit_ports(e, {"input  " + range(width) + i0, "input  " + range(width) + i1,
                   "input  " + sel, "output " + range(width) + o0,
                   "output " + range(width) + o1});
    e.out << "  " << cell << " u0 (.a(" << i0 << "), .b(" << i1 << "), .s(" << sel << "), .y("
          << o0 << "));\n";
    e.out << "  " << cell << " u1 (.a(" << i1 << "), .b(" << i0 << "), .s(" << sel << "), .y("
          << o1 << "));\n";
    e.truth.modules = 2;
    e.truth.instantiations = 2;
    e.truth.continuous_assigns = 1;
    e.truth.inputs = 3 + 3;
    e.truth.outputs = 2 + 1;
  }
  e.out << "endmodule\n";
  return {RtlDocument{"", e.out.str(), Category::routing, Subset::test}, e.truth, kind_name};
}

}  // namespace

std::vector<SynthDocument> synth_corpus_detailed(std::uint64_t seed, const CategoryCounts& counts) {
  std::vector<SynthDocument> out;
  out.reserve(counts.combinational + counts.sequential + counts.routing);
  auto run = [&](std::size_t n, std::uint64_t salt, const char* tag, auto&& gen) {
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(mix(mix(seed) ^ (salt * 0x100000001b3ULL) ^ mix(i)));
      SynthDocument d = gen(rng, i);
      char id[32];
      std::snprintf(id, sizeof id, "%s_%04zu", tag, i);
      d.doc.id = id;
      out.push_back(std::move(d));
    }
  };
  run(counts.combinational, 1, "comb", gen_combinational);
  run(counts.sequential, 2, "seq", gen_sequential);
  run(counts.routing, 3, "route", gen_routing);
  return out;
}

std::vector<RtlDocument> synth_corpus(std::uint64_t seed, const CategoryCounts& counts) {
  std::vector<RtlDocument> out;
  for (auto& d : synth_corpus_detailed(seed, counts)) out.push_back(std::move(d.doc));
  return out;
}

}  // namespace rtlguard
