#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "rtlguard/corpus.hpp"
#include "rtlguard/error.hpp"
#include "rtlguard/rtl_parser.hpp"
#include "test_paths.hpp"

using namespace rtlguard;
namespace fs = std::filesystem;

namespace {

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

std::vector<RtlDocument> numbered_docs(std::size_t n) {
  std::vector<RtlDocument> docs;
  for (std::size_t i = 0; i < n; ++i) {
    docs.push_back({"d" + std::to_string(i), "module m" + std::to_string(i) + "; endmodule\n", Category::other,
                    Subset::test});
  }
  return docs;
}

}  // namespace

TEST(Synth, SingleCombinationalModuleIsDeterministic) {
  const auto a = synth_corpus(1, {1, 0, 0});
  const auto b = synth_corpus(1, {1, 0, 0});
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].category, Category::combinational);
  EXPECT_EQ(a[0].source, b[0].source);
  EXPECT_EQ(a[0].id, b[0].id);
}

TEST(Synth, ZeroCountsGiveEmptyCorpus) { EXPECT_TRUE(synth_corpus(3, {0, 0, 0}).empty()); }

TEST(Synth, EveryDocumentParses) {
  const auto docs = synth_corpus(1, {10, 10, 10});
  ASSERT_EQ(docs.size(), 30u);
  std::set<std::string> ids;
  for (const auto& d : docs) {
    EXPECT_NO_THROW(parse_rtl(d.source)) << d.id;
    EXPECT_FALSE(d.source.empty());
    ids.insert(d.id);
  }
  EXPECT_EQ(ids.size(), docs.size());
}

TEST(Synth, CategoryCountsAreHonoured) {
  const auto docs = synth_corpus(4, {3, 5, 2});
  std::size_t c = 0, s = 0, r = 0;
  for (const auto& d : docs) {
    c += d.category == Category::combinational;
    s += d.category == Category::sequential;
    r += d.category == Category::routing;
  }
  EXPECT_EQ(c, 3u);
  EXPECT_EQ(s, 5u);
  EXPECT_EQ(r, 2u);
}

TEST(Synth, ParserCountsMatchGeneratorTruth) {
  for (const auto& sd : synth_corpus_detailed(9, {8, 8, 8})) {
    const auto tree = parse_rtl(sd.doc.source);
    EXPECT_EQ(static_cast<int>(tree.module_count()), sd.truth.modules) << sd.kind;
    EXPECT_EQ(static_cast<int>(tree.count(NodeType::Always)), sd.truth.always_blocks) << sd.kind;
    EXPECT_EQ(static_cast<int>(tree.count(NodeType::ContinuousAssign)), sd.truth.continuous_assigns) << sd.kind;
    EXPECT_EQ(static_cast<int>(tree.count(NodeType::Instantiation)), sd.truth.instantiations) << sd.kind;
  }
}

TEST(Synth, PipelinedRegisterFileAlwaysCount) {
  bool seen = false;
  for (const auto& sd : synth_corpus_detailed(2, {0, 30, 0})) {
    if (sd.kind.rfind("pipeline", 0) != 0) continue;
    seen = true;
    EXPECT_EQ(static_cast<int>(parse_rtl(sd.doc.source).count(NodeType::Always)), sd.truth.always_blocks);
  }
  EXPECT_TRUE(seen);
}

TEST(Partition, SizesAndReproducibility) {
  const auto docs = numbered_docs(20);
  const auto a = partition(docs, {17, 3, 0}, 7);
  const auto b = partition(docs, {17, 3, 0}, 7);
  EXPECT_EQ(a.non_sensitive.size(), 17u);
  EXPECT_EQ(a.proprietary.size(), 3u);
  EXPECT_EQ(a.diagnostic.size(), 0u);
  for (std::size_t i = 0; i < a.non_sensitive.size(); ++i) EXPECT_EQ(a.non_sensitive[i].id, b.non_sensitive[i].id);
  for (std::size_t i = 0; i < a.proprietary.size(); ++i) EXPECT_EQ(a.proprietary[i].id, b.proprietary[i].id);
}

TEST(Partition, OversizedSpecIsRejected) {
  const auto docs = numbered_docs(20);
  EXPECT_THROW(partition(docs, {25, 0, 0}, 1), ConfigError);
}

TEST(Partition, DeskScaleMirrorIsDisjoint) {
  const auto docs = numbered_docs(2100);
  const auto p = partition(docs, {1700, 300, 100}, 11);
  ASSERT_EQ(p.non_sensitive.size(), 1700u);
  ASSERT_EQ(p.proprietary.size(), 300u);
  ASSERT_EQ(p.diagnostic.size(), 100u);
  std::set<std::string> ids;
  for (const auto* list : {&p.non_sensitive, &p.proprietary, &p.diagnostic}) {
    for (const auto& d : *list) EXPECT_TRUE(ids.insert(d.id).second) << d.id;
  }
  for (const auto& d : p.diagnostic) EXPECT_EQ(d.subset, Subset::diagnostic);
  for (const auto& d : p.proprietary) EXPECT_EQ(d.subset, Subset::proprietary_marked);
}

TEST(Manifest, LoadsWellFormedFile) {
  const auto dir = test_dir("manifest_ok");
  write(dir / "a.v", "module a; endmodule\n");
  write(dir / "sub/b.v", "module b; endmodule\n");
  write(dir / "c.v", "module c; endmodule\n");
  write(dir / "m.tsv",
        "# id\tpath\tcategory\tsubset\n# seed 5\na\ta.v\tcombinational\tnon_sensitive\n"
        "b\tsub/b.v\tsequential\tproprietary_marked\nc\tc.v\trouting\tdiagnostic\n");
  const auto m = load_manifest(dir / "m.tsv");
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.seed, 5u);
  EXPECT_EQ(m.entries[1].category, Category::sequential);
  const auto docs = load_documents(m);
  EXPECT_EQ(docs[1].source, "module b; endmodule\n");
  const auto counts = m.subset_counts();
  EXPECT_EQ(counts[0], 1u);
  EXPECT_EQ(counts[1], 1u);
  EXPECT_EQ(counts[2], 1u);
}

TEST(Manifest, DuplicateIdIsRejected) {
  const auto dir = test_dir("manifest_dup");
  write(dir / "a.v", "module a; endmodule\n");
  write(dir / "m.tsv", "alu0\ta.v\tother\ttest\nalu0\ta.v\tother\ttest\n");
  try {
    load_manifest(dir / "m.tsv");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate id"), std::string::npos) << e.what();
  }
}

TEST(Manifest, BadEntriesAreRejected) {
  const auto dir = test_dir("manifest_bad");
  write(dir / "a.v", "module a; endmodule\n");
  write(dir / "subset.tsv", "a\ta.v\tother\tsecret\n");
  write(dir / "path.tsv", "a\tmissing.v\tother\ttest\n");
  write(dir / "overlap.tsv", "a\ta.v\tother\tdiagnostic\nb\ta.v\tother\tnon_sensitive\n");
  EXPECT_THROW(load_manifest(dir / "subset.tsv"), ConfigError);
  EXPECT_THROW(load_manifest(dir / "path.tsv"), ConfigError);
  EXPECT_THROW(load_manifest(dir / "overlap.tsv"), ConfigError);
  EXPECT_THROW(load_manifest(dir / "absent.tsv"), ConfigError);
}

TEST(Manifest, LargeManifestProportionsAreReported) {
  const auto dir = test_dir("manifest_large");
  write(dir / "x.v", "module x; endmodule\n");
  std::string text;
  for (int i = 0; i < 2100; ++i) {
    const char* subset = i < 1700 ? "non_sensitive" : i < 2000 ? "proprietary_marked" : "diagnostic";
    const std::string file = "d/" + std::to_string(i) + ".v";
    write(dir / file, "module m; endmodule\n");
    text += "m" + std::to_string(i) + "\t" + file + "\tother\t" + subset + "\n";
  }
  write(dir / "m.tsv", text);
  const auto counts = load_manifest(dir / "m.tsv").subset_counts();
  EXPECT_EQ(counts[0], 1700u);
  EXPECT_EQ(counts[1], 300u);
  EXPECT_EQ(counts[2], 100u);
}

TEST(Manifest, FormatRoundTrip) {
  const auto dir = test_dir("manifest_rt");
  write(dir / "a.v", "module a; endmodule\n");
  CorpusManifest m;
  m.seed = 42;
  m.entries.push_back({"a", "a.v", Category::crypto, Subset::proprietary_marked});
  write(dir / "m.tsv", format_manifest(m));
  const auto back = load_manifest(dir / "m.tsv");
  ASSERT_EQ(back.entries.size(), 1u);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.entries[0].category, Category::crypto);
  EXPECT_EQ(back.entries[0].subset, Subset::proprietary_marked);
}
