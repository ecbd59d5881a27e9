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

#include "rtlguard/error.hpp"

namespace rtlguard {

// Byte-level vocabulary: 256 byte symbols plus BOS and EOS.
inline constexpr int kVocab = 258;
inline constexpr int kBos = 256;
inline constexpr int kEos = 257;

struct LmConfig {
  int layers = 8;
  int hidden = 64;
  int heads = 4;
  int context = 512;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const LmConfig&) const = default;
};

/// BOS followed by the bytes of `text` (no EOS).
std::vector<int> encode_prompt(std::string_view text);

/// Decoder-only transformer with pre-LayerNorm blocks, learned positions,
/// GELU MLP (4x) and an output head tied to the token embedding.
class LanguageModel {
 public:
  struct Tensor {
    std::string name;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
  };

  /// Random initialisation from config.seed.
  explicit LanguageModel(const LmConfig& config);

  const LmConfig& config() const { return config_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::span<const float> parameters() const { return params_; }
  std::span<float> parameters() { return params_; }

  bool operator==(const LanguageModel& other) const {
    return config_ == other.config_ && params_ == other.params_;
  }

  // Offsets into parameters(); weight matrices are stored [in][out].
  struct LayerParams {
    std::size_t ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ln2_g, ln2_b, fc_w, fc_b, out_w, out_b;
  };
  std::size_t wte() const { return wte_; }
  std::size_t wpe() const { return wpe_; }
  std::size_t lnf_g() const { return lnf_g_; }
  std::size_t lnf_b() const { return lnf_b_; }
  const LayerParams& layer(int l) const { return layers_[static_cast<std::size_t>(l)]; }

 private:
  std::size_t add(const std::string& name, std::size_t rows, std::size_t cols);

  LmConfig config_;
  std::vector<float> params_;
  std::vector<Tensor> tensors_;
  std::size_t wte_ = 0, wpe_ = 0, lnf_g_ = 0, lnf_b_ = 0;
  std::vector<LayerParams> layers_;
};

struct TrainOptions {
  int steps = 1000;
  double learning_rate = 3e-3;
  /// Sequences per optimizer step (gradients are summed in a fixed order).
  int batch = 4;
  /// Linear warmup steps, then cosine decay to 10% of learning_rate.
  int warmup = 50;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  /// Called every `log_every` steps with (step, mean batch loss).
  std::function<void(int, double)> on_log;
  int log_every = 100;
};

struct TrainReport {
  double initial_loss = 0;
  double final_loss = 0;
  int steps = 0;
};

/// Next-token cross-entropy training on `documents`, each framed as
/// BOS + bytes + EOS and split into context-sized windows.
TrainReport train_lm(LanguageModel& model, const std::vector<std::string>& documents,
                     const TrainOptions& options);

enum class Tap : std::uint8_t { residual, mlp_input };
std::string_view to_string(Tap tap);
Tap parse_tap(std::string_view text);

struct TapSpec {
  int layer;  // 1-based
  Tap tap;
  auto operator<=>(const TapSpec&) const = default;
};

/// Activations per (layer, tap): one length-d vector per token position.
/// Position 0 is the BOS token.
struct ActivationSet {
  int hidden = 0;
  std::map<TapSpec, std::vector<std::vector<float>>> values;

  const std::vector<std::vector<float>>& at(int layer, Tap tap) const;
};

/// Replaces the residual stream after block `layer` (1-based) with the
/// callback's return value, which must have the same length.
struct EditHook {
  std::vector<int> layers;
  std::function<std::vector<float>(int layer, std::span<const float> h)> edit;
};

struct DecodeConfig {
  /// 0 selects greedy decoding.
  double temperature = 0.0;
  std::uint64_t seed = 0;
  int max_new_tokens = 256;
  /// Apply hooks while consuming the prompt as well as at generated positions.
  bool hook_prompt = true;
};

/// Runs the model over BOS + `text` and records the requested taps. The
/// residual tap is the block output before any hook.
ActivationSet capture_activations(const LanguageModel& model, std::string_view text,
                                  const std::vector<TapSpec>& taps,
                                  const std::vector<EditHook>& hooks = {});

/// Mean next-token cross-entropy (nats) of one framed document.
double sequence_loss(const LanguageModel& model, std::string_view document,
                     const std::vector<EditHook>& hooks = {});

/// exp(mean per-token cross-entropy) over all documents, EOS included.
double perplexity(const LanguageModel& model, const std::vector<std::string>& documents,
                  const std::vector<EditHook>& hooks = {});

/// Continuation bytes after `prompt`, stopping at EOS, max_new_tokens or the
/// context limit.
std::string generate(const LanguageModel& model, std::string_view prompt, const DecodeConfig& decode,
                     const std::vector<EditHook>& hooks = {});

// CGLM1 checkpoint: text header listing shapes, then raw float32 tensors.
std::string format_checkpoint(const LanguageModel& model);
LanguageModel parse_checkpoint(std::string_view data);
void save_checkpoint(const LanguageModel& model, const std::filesystem::path& path);
LanguageModel load_checkpoint(const std::filesystem::path& path);

/// One CGACT1 record: a single (sample, layer, tap, position) vector.
struct ActivationRecord {
  std::string sample;
  int layer = 0;
  Tap tap = Tap::residual;
  int position = 0;
  std::vector<float> values;

  bool operator==(const ActivationRecord&) const = default;
};

class ActivationWriter {
 public:
  explicit ActivationWriter(int hidden);
  void add(const ActivationRecord& record);
  void add(std::string_view sample, const ActivationSet& set);
  const std::string& data() const { return data_; }

 private:
  int hidden_;
  std::string data_;
};

std::vector<ActivationRecord> parse_activations(std::string_view data, int* hidden = nullptr);

}  // namespace rtlguard
