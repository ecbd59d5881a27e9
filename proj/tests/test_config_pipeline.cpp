#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "rtlguard/config.hpp"
#include "rtlguard/embedding.hpp"
#include "rtlguard/io.hpp"
#include "rtlguard/pipeline.hpp"
#include "test_paths.hpp"

using namespace rtlguard;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"([run]
seed = 5
[corpus]
combinational = 3
sequential = 3
routing = 3
non_sensitive = 2
proprietary = 6
diagnostic = 1
[lm]
layers = 2
hidden = 16
heads = 2
context = 384
steps = 6
batch = 2
warmup = 2
[sae]
latents = 16
steps = 20
batch = 16
[identify]
rule = top_k:4
[steering]
norm_runs = 2
[sweep]
k_values = 2,4
alphas = 0,1
max_new_tokens = 12
[transfer]
k_values = 2
[adaptive]
probes = 1
steps = 2
)";

PipelineConfig tiny(const fs::path& out) {
  auto c = parse_config(kTiny);
  c.out = out;
  return c;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = io::read_file(e.path());
  }
  return files;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RTLGUARD_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsAndDerivedSeeds) {
  const auto c = parse_config("[run]\nseed = 40\n");
  EXPECT_EQ(c.seed, 40u);
  EXPECT_EQ(c.corpus_seed, 40u);
  EXPECT_EQ(c.lm.seed, 41u);
  EXPECT_EQ(c.sae_seed, 42u);
  EXPECT_EQ(c.decode_seed, 43u);
  const auto o = parse_config("[run]\nseed = 40\n[lm]\nseed = 3\n", 100);
  EXPECT_EQ(o.seed, 100u);
  EXPECT_EQ(o.corpus_seed, 100u);
  EXPECT_EQ(o.lm.seed, 3u);
}

TEST(Config, UnknownAndMalformedKeys) {
  EXPECT_THROW(parse_config("[lm]\nlayerz = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[nope]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[lm]\nlayers = three\n"), ConfigError);
  EXPECT_THROW(parse_config("[steering]\nalpha = 2.0\n"), ConfigError);
  EXPECT_THROW(parse_config("[embedding]\ndims = 1,2,3\n"), ConfigError);
  EXPECT_THROW(load_config(test_dir("cfg_missing") / "absent.ini"), ConfigError);
}

TEST(Config, FormatRoundTrip) {
  const auto c = parse_config(kTiny);
  const auto text = format_config(c);
  EXPECT_EQ(format_config(parse_config(text)), text);
  EXPECT_NE(text.find("latents = 16"), std::string::npos);
}

TEST(Pipeline, StageNames) {
  for (Stage s : all_stages()) EXPECT_EQ(parse_stage(to_string(s)), s);
  EXPECT_EQ(to_string(Stage::sae), "sae-train");
  EXPECT_THROW(parse_stage("train"), ConfigError);
}

TEST(Pipeline, RerunningEarlyStagesIsByteIdentical) {
  const auto dir = test_dir("pipe_rerun");
  const auto c = tiny(dir);
  run_pipeline(c, {Stage::synth, Stage::embed});
  const auto first = snapshot(dir);
  run_pipeline(c, {Stage::synth, Stage::embed});
  EXPECT_EQ(snapshot(dir), first);
  EXPECT_TRUE(first.count("corpus/manifest.tsv"));
  EXPECT_TRUE(first.count("embed/index.cgidx"));
  const auto hits = run_query(c, "module m(input a, output y); assign y = a; endmodule", 3);
  EXPECT_EQ(hits.size(), 3u);
}

TEST(Pipeline, MissingArtifactNamesProducer) {
  const auto dir = test_dir("pipe_missing");
  const auto c = tiny(dir);
  run_pipeline(c, {Stage::synth, Stage::train_lm});
  try {
    run_stage(Stage::steer, c);
    FAIL() << "expected MissingArtifactError";
  } catch (const MissingArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("sae-train"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, FullRunIsDeterministic) {
  const auto a = test_dir("pipe_all_a"), b = test_dir("pipe_all_b");
  run_pipeline(tiny(a), all_stages());
  run_pipeline(tiny(b), all_stages());
  const auto sa = snapshot(a), sb = snapshot(b);
  EXPECT_EQ(sa, sb);
  for (const char* f : {"report.md", "sweep/sweep.csv", "transfer/transfer.csv", "steer/delta_norms.tsv",
                        "identify/selection.cgsel", "sae/layer1.cgsae", "lm/model.cglm"}) {
    EXPECT_TRUE(sa.count(f)) << f;
  }
}

TEST(Pipeline, PrecomputedSemanticVectorsReachTheIndex) {
  const auto dir = test_dir("pipe_precomputed");
  std::ofstream(dir / "a.v") << "module a(input x, output y); assign y = x; endmodule\n";
  std::ofstream(dir / "b.v") << "module b(input clk); reg q; always @(posedge clk) q <= ~q; endmodule\n";
  std::ofstream(dir / "manifest.tsv") << "a\ta.v\tcombinational\ttest\nb\tb.v\tsequential\ttest\n";
  std::ofstream(dir / "vectors.tsv") << "a\t4\t3,0,4,0\nb\t4\t0,-1,0,0\n";
  std::ofstream(dir / "run.ini") << "[corpus]\nmanifest = manifest.tsv\nsemantic_vectors = vectors.tsv\n"
                                    "[embedding]\ndims = 4,256,32,16,32,16,32,64,32\n";
  auto c = load_config(dir / "run.ini");
  c.out = dir / "out";
  run_pipeline(c, {Stage::synth, Stage::embed});
  const auto index = load_index(Layout{c.out}.index());
  ASSERT_EQ(index.size(), 2u);
  const auto row = index.row(0);
  const double w = c.embedding.weight(Family::semantic);
  EXPECT_NEAR(row[0], 0.6 * w, 1e-12);
  EXPECT_NEAR(row[2], 0.8 * w, 1e-12);
  EXPECT_NEAR(index.row(1)[1], -w, 1e-12);
  // ad-hoc text has no stored vector; retrieval falls back to the other families
  const auto hits = run_query(c, io::read_file(dir / "b.v"), 2);
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].id, "b");
}

TEST(Cli, ExitCodes) {
  const auto dir = test_dir("cli_codes");
  std::ofstream(dir / "bad.ini") << "[lm]\nbogus = 1\n";
  EXPECT_EQ(run_cli("--config " + (dir / "bad.ini").string() + " synth"), 2);
  EXPECT_EQ(run_cli("--no-such-flag"), 2);
  std::ofstream(dir / "ok.ini") << "[run]\nseed = 1\n";
  EXPECT_EQ(run_cli("--config " + (dir / "ok.ini").string() + " --out " + (dir / "empty").string() + " steer"), 3);
  EXPECT_EQ(run_cli("--config " + (dir / "ok.ini").string() + " --out " + (dir / "s").string() + " synth"), 0);
}
