#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rtlguard/corpus.hpp"
#include "rtlguard/embedding.hpp"
#include "rtlguard/features.hpp"
#include "rtlguard/lm.hpp"
#include "rtlguard/steering.hpp"

namespace rtlguard {

/// Everything a pipeline run depends on. Seeds left unset in the file are
/// derived from `seed` so one number pins the whole run.
struct PipelineConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";

  // [corpus]
  std::filesystem::path manifest;  // empty: the synth stage generates one
  std::filesystem::path semantic_vectors;  // empty: hashed n-gram semantics
  std::uint64_t corpus_seed = 0;
  CategoryCounts synth{10, 10, 10};
  PartitionSpec partition{6, 12, 6};

  // [embedding]
  EmbeddingConfig embedding;
  std::size_t identifier_cap = 50;
  std::size_t query_k = 5;

  // [lm]
  LmConfig lm{4, 64, 4, 512, 0};
  int lm_steps = 600;
  double lm_learning_rate = 3e-3;
  int lm_batch = 4;
  int lm_warmup = 50;
  double lm_weight_decay = 0.0;

  // [activations]
  std::vector<int> layers;  // empty: every layer
  Tap tap = Tap::residual;

  // [sae]
  std::size_t sae_latents = 256;
  double sae_lambda = 0.03;
  int sae_steps = 1500;
  double sae_learning_rate = 1e-3;
  std::size_t sae_batch = 64;
  std::uint64_t sae_seed = 0;

  // [identify]
  SelectionRule rule = SelectionRule::top_k(32);

  // [steering]
  SteeringConfig steering;
  int norm_runs = 3;

  // [sweep]
  std::vector<std::size_t> k_values{4, 8, 16, 32};
  std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
  double prompt_fraction = 0.25;
  int max_new_tokens = 512;
  double temperature = 0.0;
  std::uint64_t decode_seed = 0;
  double min_quality = 6.0;
  double max_perplexity_increase = 0.25;

  // [transfer]
  Category transfer_source = Category::combinational;
  Category transfer_target = Category::sequential;
  std::vector<std::size_t> transfer_k{4, 8, 16, 32};
  double transfer_alpha = 1.0;

  // [adaptive]
  bool adaptive = true;
  std::size_t adaptive_probes = 4;
  double adaptive_s0 = 1.0;
  int adaptive_steps = 4;
  double adaptive_s_min = 0.25;
  double adaptive_s_max = 1.5;

  void validate() const;
  DecodeConfig decode() const;
  SemanticProvider semantic_provider() const;
};

/// Parses the INI text. Unknown sections or keys, malformed values and
/// invalid combinations raise ConfigError. `seed_override` replaces
/// [run] seed before derived seeds are filled in.
PipelineConfig parse_config(std::string_view text, std::optional<std::uint64_t> seed_override = {});
PipelineConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {});

/// Canonical INI rendering of every key, derived seeds included; parsing it
/// back formats identically.
std::string format_config(const PipelineConfig& config);

}  // namespace rtlguard
