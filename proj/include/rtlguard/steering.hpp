#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rtlguard/embedding.hpp"
#include "rtlguard/lm.hpp"
#include "rtlguard/sae.hpp"

namespace rtlguard {

/// Latent codes per layer: one z vector per probe sample.
using LayerCodes = std::map<int, std::vector<std::vector<double>>>;
/// Per-layer |mean_P z - mean_D z| for every latent.
using LayerDeltas = std::map<int, std::vector<double>>;

LayerDeltas compute_deltas(const LayerCodes& proprietary, const LayerCodes& diagnostic);

/// Mean over positions of the SAE code of each captured residual vector.
std::vector<double> mean_code(const SparseAutoencoder& sae, const std::vector<std::vector<float>>& positions);

struct SelectionRule {
  enum class Kind { threshold, top_k };
  Kind kind = Kind::top_k;
  double tau = 0;
  std::size_t k = 0;

  static SelectionRule threshold(double tau);
  static SelectionRule top_k(std::size_t k);
  std::string describe() const;
  static SelectionRule parse(std::string_view text);
  bool operator==(const SelectionRule&) const = default;
};

struct LatentScore {
  std::size_t index = 0;
  double delta = 0;
  bool operator==(const LatentScore&) const = default;
};

/// Selected latents per layer in rank order (delta descending, index
/// ascending on ties), so a top-K prefix is again a valid selection.
struct FeatureSelection {
  SelectionRule rule;
  std::string proprietary_set;
  std::string diagnostic_set;
  std::map<int, std::size_t> latents;  // SAE width per layer, for percentages
  std::map<int, std::vector<LatentScore>> layers;

  std::size_t total() const;
  std::size_t total_latents() const;
  /// At most k latents per layer (the top of each list).
  FeatureSelection top(std::size_t k) const;
  bool operator==(const FeatureSelection&) const = default;
};

FeatureSelection select_features(const LayerDeltas& deltas, const SelectionRule& rule,
                                 std::string proprietary_set = "P", std::string diagnostic_set = "D");

// CGSEL1: header (rule, provenance, per-layer widths) then
// `layer<TAB>index<TAB>delta` lines.
std::string format_selection(const FeatureSelection& selection);
FeatureSelection parse_selection(std::string_view data);
void save_selection(const FeatureSelection& selection, const std::filesystem::path& path);
FeatureSelection load_selection(const std::filesystem::path& path);

/// 100 * part / whole, fixed to two decimals ("0.15").
std::string format_percent(std::size_t part, std::size_t whole);

struct LayerCount {
  int layer = 0;
  std::size_t count = 0;
  std::size_t latents = 0;
};

std::vector<LayerCount> layer_counts(const FeatureSelection& selection);
/// Markdown table of per-layer counts and percentages plus a
/// "Total: N (P%)" line.
std::string format_layer_table(const std::vector<LayerCount>& rows);

enum class EditMode { full_decode, decode_difference };
enum class Weighting { uniform, score_proportional };
std::string_view to_string(EditMode mode);
std::string_view to_string(Weighting weighting);
EditMode parse_edit_mode(std::string_view text);
Weighting parse_weighting(std::string_view text);

struct SteeringConfig {
  double alpha = 1.0;
  double alpha_max = 1.5;
  std::size_t k = 0;  // per-layer budget; 0 keeps the whole selection
  std::vector<int> layers;  // empty: every layer in the selection
  EditMode mode = EditMode::decode_difference;
  Weighting weighting = Weighting::uniform;

  void validate() const;
};

/// Scales selected coordinates by (1 - alpha_i); others are copied bit-exactly.
std::vector<double> suppress_latent(std::span<const double> z, const std::vector<LatentScore>& selected,
                                    double alpha, Weighting weighting);

std::vector<double> edit_activation(std::span<const double> h, const SparseAutoencoder& sae,
                                    const std::vector<LatentScore>& selected, double alpha, EditMode mode,
                                    Weighting weighting);

/// Observes ||h' - h||_2 for every edit a hook performs.
using DeltaObserver = std::function<void(int layer, double norm)>;

/// One hook editing every steered layer that has both an SAE and selected
/// latents. Returns no hooks when nothing would be edited.
std::vector<EditHook> make_steering_hooks(const std::map<int, SparseAutoencoder>& saes,
                                          const FeatureSelection& selection, const SteeringConfig& config,
                                          DeltaObserver observer = {});

struct NormStats {
  double mean = 0;
  double std = 0;
  double min = 0;
  double max = 0;
};

/// For each run, the mean edit norm per layer over all generation steps of
/// all prompts; the statistics are taken across runs (sample std).
std::map<int, NormStats> delta_norm_stats(const LanguageModel& model,
                                          const std::map<int, SparseAutoencoder>& saes,
                                          const FeatureSelection& selection, const SteeringConfig& config,
                                          const std::vector<std::string>& prompts, int runs,
                                          const DecodeConfig& decode);

/// Per selected latent: mean and standard deviation of its activation over
/// every position of the diagnostic texts.
struct RiskCalibration {
  struct Stat {
    double mean = 0;
    double std = 0;
  };
  std::map<int, std::map<std::size_t, Stat>> stats;
  bool operator==(const RiskCalibration& o) const;
};

RiskCalibration calibrate_risk(const LanguageModel& model, const std::map<int, SparseAutoencoder>& saes,
                               const FeatureSelection& selection, const std::vector<std::string>& diagnostic);

std::string format_calibration(const RiskCalibration& calibration);
RiskCalibration parse_calibration(std::string_view data);

/// logistic(mean z-score of selected latents over prompt positions).
/// Individual z-scores are clipped to +-10.
double compute_risk(const LanguageModel& model, std::string_view prompt, const FeatureSelection& selection,
                    const std::map<int, SparseAutoencoder>& saes, const RiskCalibration& calibration);

struct AdaptiveStep {
  double strength = 0;
  double quality = 0;
  std::string text;
};

struct AdaptiveResult {
  std::string text;
  double quality = 0;
  double strength = 0;
  double risk = 0;
  std::vector<AdaptiveStep> steps;
};

/// The progressive strength sweep: S evenly spaced strengths from s_start to
/// s_end, stopping once quality falls below 0.8x the previous step; keeps
/// the first best-quality output.
AdaptiveResult adaptive_sweep(double s_start, double s_end, int steps,
                              const std::function<std::string(double)>& generate_at,
                              const std::function<double(const std::string&)>& quality);

/// s_adapt = clamp(s0 * (0.5 + risk), s_min, s_max); s_start = max(s_min,
/// s_adapt); s_end = s_max. Quality is scored on prompt + continuation.
AdaptiveResult adaptive_generate(const LanguageModel& model, const std::map<int, SparseAutoencoder>& saes,
                                 const FeatureSelection& selection, const SteeringConfig& base,
                                 const RiskCalibration& calibration, std::string_view prompt,
                                 const DecodeConfig& decode, double s0, int steps, double s_min, double s_max);

// Generated text has no precomputed semantic vector, so text comparisons
// always use the hashed n-gram provider at the configured semantic width.

/// 100 * (1 - cosine) of the two texts' embeddings, clamped to [0, 100].
double semantic_difference(std::string_view a, std::string_view b, const EmbeddingConfig& embedding);

/// Cosine similarity of the two texts' embeddings.
double text_similarity(std::string_view a, std::string_view b, const EmbeddingConfig& embedding);

/// Longest common prefix of generation and reference, as a fraction of the
/// reference length (1 for an empty reference).
double regurgitation_ratio(std::string_view generation, std::string_view reference);

struct Probe {
  std::string id;
  std::string prompt;
  /// Memorized continuation the prompt was cut from.
  std::string reference;
};

/// Cuts the first `fraction` of each document's bytes as the prompt.
Probe make_probe(std::string id, std::string_view document, double fraction);

struct SweepRecord {
  std::size_t k = 0;
  double alpha = 0;
  double sem_diff = 0;      // vs the unsteered continuation, percent
  double similarity = 0;    // vs the memorized reference continuation
  double quality = 0;       // of prompt + continuation
  double regurgitation = 0;
  std::map<int, double> delta_norms;  // mean edit norm per layer
};

struct SweepOptions {
  std::vector<std::size_t> k_values;
  std::vector<double> alphas;
  SteeringConfig steering;
  DecodeConfig decode;
  EmbeddingConfig embedding;
};

struct SweepBaseline {
  std::vector<std::string> continuations;
  double similarity = 0;
  double quality = 0;
  double regurgitation = 0;
};

SweepBaseline sweep_baseline(const LanguageModel& model, const std::vector<Probe>& probes,
                             const SweepOptions& options);

/// Records ordered by K then alpha. Semantic difference is measured on
/// continuations only; the prompt is shared and would dilute it.
std::vector<SweepRecord> sweep(const LanguageModel& model, const std::map<int, SparseAutoencoder>& saes,
                               const FeatureSelection& selection, const std::vector<Probe>& probes,
                               const SweepOptions& options, const SweepBaseline& baseline);

std::string format_sweep_csv(const std::vector<SweepRecord>& records);
std::vector<SweepRecord> parse_sweep_csv(std::string_view text);

struct SteeringPoint {
  double alpha = 0;
  double sem_diff = 0;
  double quality = 0;
  bool operator==(const SteeringPoint&) const = default;
};

struct KneeOversteer {
  std::optional<SteeringPoint> knee;
  std::optional<SteeringPoint> oversteer;
};

/// Knee: first record with sem_diff >= 10 and quality < 8. Oversteer: first
/// with sem_diff >= 80; `oversteer_requires_low_quality` additionally asks
/// for quality < 6. Records must be sorted by alpha.
KneeOversteer detect_knee_oversteer(const std::vector<SteeringPoint>& records,
                                    bool oversteer_requires_low_quality = false);

struct TransferResult {
  std::size_t k = 0;
  double alpha = 0;
  std::size_t transferred = 0;        // |A ∩ B| across layers
  std::size_t selection_size = 0;     // |A|
  std::size_t total_latents = 0;
  double sem_diff_a = 0;              // on domain B probes using selection A
  double sem_diff_b = 0;              // on domain B probes using selection B
  std::optional<double> effectiveness;  // percent; none when sem_diff_b == 0

  double transfer_rate() const;   // transferred / total latents, percent
  double overlap_rate() const;    // transferred / |A|, percent
};

std::size_t selection_overlap(const FeatureSelection& a, const FeatureSelection& b);

/// Effectiveness of selection A on domain-B probes relative to B's own
/// selection, at the same (K, alpha).
TransferResult transfer_eval(const LanguageModel& model, const std::map<int, SparseAutoencoder>& saes,
                             const FeatureSelection& selection_a, const FeatureSelection& selection_b,
                             const std::vector<Probe>& probes_b, std::size_t k, double alpha,
                             const SweepOptions& options, const SweepBaseline& baseline_b);

}  // namespace rtlguard
