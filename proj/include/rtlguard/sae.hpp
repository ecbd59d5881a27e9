#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rtlguard/error.hpp"

namespace rtlguard {

/// z = ReLU(We h + be), h_hat = Wd z + bd. We is m x d row-major; the
/// decoder is held as m contiguous columns of length d.
class SparseAutoencoder {
 public:
  SparseAutoencoder() = default;
  SparseAutoencoder(int layer, std::size_t d, std::size_t m, double lambda);

  int layer() const { return layer_; }
  std::size_t input_dim() const { return d_; }
  std::size_t latent_dim() const { return m_; }
  double lambda() const { return lambda_; }
  void set_lambda(double lambda);

  std::span<double> encoder_weights() { return we_; }
  std::span<const double> encoder_weights() const { return we_; }
  std::span<double> encoder_bias() { return be_; }
  std::span<const double> encoder_bias() const { return be_; }
  std::span<double> decoder_weights() { return wd_; }
  std::span<const double> decoder_weights() const { return wd_; }
  std::span<double> decoder_bias() { return bd_; }
  std::span<const double> decoder_bias() const { return bd_; }

  /// Column i of the decoder (length d).
  std::span<const double> column(std::size_t i) const;
  /// Scales every decoder column to unit L2 norm (zero columns are left alone).
  void normalize_columns();

  std::vector<double> encode(std::span<const double> h) const;
  std::vector<double> encode(std::span<const float> h) const;
  std::vector<double> decode(std::span<const double> z) const;

  bool operator==(const SparseAutoencoder&) const = default;

 private:
  int layer_ = 0;
  std::size_t d_ = 0;
  std::size_t m_ = 0;
  double lambda_ = 0;
  std::vector<double> we_, be_, wd_, bd_;
};

struct SaeLoss {
  double total = 0;
  double mse = 0;
  double l1 = 0;
};

/// mse = mean over samples of ||h - h_hat||^2; l1 = mean of lambda*||z||_1.
SaeLoss sae_loss(const SparseAutoencoder& sae, const std::vector<std::vector<double>>& batch);

/// Gradients of sae_loss().total, laid out like the model parameters.
struct SaeGradients {
  std::vector<double> we, be, wd, bd;
};

SaeLoss sae_gradients(const SparseAutoencoder& sae, const std::vector<std::vector<double>>& batch,
                      SaeGradients& grad);

/// Fraction of variance left unexplained: total squared reconstruction
/// error over total squared deviation from the data mean.
double relative_mse(const SparseAutoencoder& sae, const std::vector<std::vector<double>>& data);

/// Mean number of active latents per sample.
double mean_l0(const SparseAutoencoder& sae, const std::vector<std::vector<double>>& data);

struct SaeTrainOptions {
  std::size_t latents = 512;
  double lambda = 1e-3;
  int steps = 2000;
  double learning_rate = 1e-3;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
  std::function<void(int, const SaeLoss&)> on_log;
  int log_every = 500;
};

struct SaeTrainReport {
  SaeLoss initial;
  SaeLoss final;
  double mean_l0 = 0;
};

/// Adam on minibatches drawn by a seeded shuffle; decoder columns are
/// renormalized after every step. Training data is never modified.
SparseAutoencoder train_sae(const std::vector<std::vector<double>>& data, const SaeTrainOptions& options,
                            int layer = 0, SaeTrainReport* report = nullptr);

// CGSAE1: text header (layer, d, m, lambda) then raw little-endian doubles.
std::string format_sae(const SparseAutoencoder& sae);
SparseAutoencoder parse_sae(std::string_view data);
void save_sae(const SparseAutoencoder& sae, const std::filesystem::path& path);
SparseAutoencoder load_sae(const std::filesystem::path& path);

}  // namespace rtlguard
