#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "rtlguard/config.hpp"
#include "rtlguard/embedding.hpp"

namespace rtlguard {

enum class Stage { synth, embed, train_lm, activations, sae, identify, steer, sweep, transfer, report };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);
/// Every stage in execution order (what `all` runs).
const std::vector<Stage>& all_stages();

/// Artifact locations under the output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "corpus" / "manifest.tsv"; }
  std::filesystem::path index() const { return root / "embed" / "index.cgidx"; }
  std::filesystem::path model() const { return root / "lm" / "model.cglm"; }
  std::filesystem::path train_log() const { return root / "lm" / "train_log.tsv"; }
  std::filesystem::path memorization() const { return root / "lm" / "memorization.tsv"; }
  std::filesystem::path activations(std::string_view subset) const;
  std::filesystem::path sae(int layer) const;
  std::filesystem::path sae_summary() const { return root / "sae" / "summary.tsv"; }
  /// Empty name: the main proprietary-vs-diagnostic selection.
  std::filesystem::path selection(std::string_view name = {}) const;
  std::filesystem::path deltas() const { return root / "identify" / "deltas.tsv"; }
  std::filesystem::path calibration() const { return root / "identify" / "calibration.tsv"; }
  std::filesystem::path delta_norms() const { return root / "steer" / "delta_norms.tsv"; }
  std::filesystem::path steer_probes() const { return root / "steer" / "probes.tsv"; }
  std::filesystem::path steer_perplexity() const { return root / "steer" / "perplexity.tsv"; }
  std::filesystem::path adaptive() const { return root / "steer" / "adaptive.tsv"; }
  /// Empty category: all proprietary probes.
  std::filesystem::path sweep_csv(std::string_view category = {}) const;
  std::filesystem::path operating_point() const { return root / "sweep" / "operating_point.tsv"; }
  std::filesystem::path transfer() const { return root / "transfer" / "transfer.csv"; }
  std::filesystem::path report() const { return root / "report.md"; }
};

/// Progress messages (stderr in the CLI). Never written into artifacts.
using Logger = std::function<void(const std::string&)>;

void run_stage(Stage stage, const PipelineConfig& config, const Logger& log = {});
void run_pipeline(const PipelineConfig& config, const std::vector<Stage>& stages, const Logger& log = {});

/// Top-k corpus documents for a source text, against the stored index.
std::vector<SearchHit> run_query(const PipelineConfig& config, std::string_view source, std::size_t k);

}  // namespace rtlguard
