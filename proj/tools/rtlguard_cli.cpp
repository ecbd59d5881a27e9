// rtlguard: stage-oriented driver for the memorization defense pipeline.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>

#include "rtlguard/config.hpp"
#include "rtlguard/error.hpp"
#include "rtlguard/io.hpp"
#include "rtlguard/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumerical = 4;

void log_line(const std::string& msg) {
  static const auto start = std::chrono::steady_clock::now();
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::fprintf(stderr, "[%7.1fs] %s\n", t, msg.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  using namespace rtlguard;

  CLI::App app{"RTL memorization defense pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "INI configuration file");
  app.add_option("--out", out_dir, "output directory (overrides [run] out)");
  app.add_option("--seed", seed, "master seed (overrides [run] seed)");

  std::vector<std::pair<CLI::App*, Stage>> stage_commands;
  const std::vector<std::pair<Stage, std::string>> descriptions{
      {Stage::synth, "generate the synthetic corpus and its partitioned manifest"},
      {Stage::embed, "build the multi-faceted embedding index"},
      {Stage::train_lm, "train the byte-level language model"},
      {Stage::activations, "capture per-layer activations for each subset"},
      {Stage::sae, "train one sparse autoencoder per layer"},
      {Stage::identify, "rank latents by proprietary vs diagnostic activation gap"},
      {Stage::steer, "steer at the configured (K, alpha) and record edit norms"},
      {Stage::sweep, "sweep K and alpha; pick the operating point"},
      {Stage::transfer, "evaluate cross-category transfer of selections"},
      {Stage::report, "write report.md from the stage artifacts"},
  };
  for (const auto& [stage, text] : descriptions) {
    stage_commands.emplace_back(app.add_subcommand(std::string(to_string(stage)), text), stage);
  }
  auto* all = app.add_subcommand("all", "run every stage in order");
  auto* query = app.add_subcommand("query", "nearest corpus documents for a Verilog file");
  std::string query_file;
  std::size_t query_k = 0;
  query->add_option("file", query_file, "Verilog source to look up")->required()->check(CLI::ExistingFile);
  query->add_option("-k", query_k, "number of results (default [embedding] query_k)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    PipelineConfig config = config_path.empty() ? parse_config("", seed) : load_config(config_path, seed);
    if (!out_dir.empty()) config.out = out_dir;

    if (query->parsed()) {
      const auto hits = run_query(config, io::read_file(query_file), query_k ? query_k : config.query_k);
      for (std::size_t i = 0; i < hits.size(); ++i) {
        std::printf("%zu\t%s\t%s\n", i + 1, hits[i].id.c_str(), io::format_double(hits[i].score).c_str());
      }
      return kExitOk;
    }
    if (all->parsed()) {
      run_pipeline(config, all_stages(), log_line);
      return kExitOk;
    }
    for (const auto& [cmd, stage] : stage_commands) {
      if (cmd->parsed()) run_stage(stage, config, log_line);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const MissingArtifactError& e) {
    std::fprintf(stderr, "missing artifact: %s\n", e.what());
    return kExitMissing;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
}
