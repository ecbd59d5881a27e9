#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rtlguard/error.hpp"
#include "rtlguard/features.hpp"

namespace rtlguard {

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::string_view bytes);

/// Signed feature hashing: index = h mod dim, sign from the top bit of h.
void hash_into(std::string_view key, double value, std::span<double> out);
std::vector<double> hash_features(const SparseFeatures& features, std::size_t dim);

struct EmbeddingConfig {
  std::array<std::size_t, kFamilyCount> dims{384, 256, 32, 16, 32, 16, 32, 64, 32};
  std::array<double, kFamilyCount> weights{0.30, 0.20, 0.10, 0.05, 0.10, 0.05, 0.05, 0.05, 0.10};

  std::size_t dim(Family f) const { return dims[static_cast<std::size_t>(f)]; }
  double weight(Family f) const { return weights[static_cast<std::size_t>(f)]; }
  std::size_t total_dim() const;
  /// Throws ConfigError on a zero dimension, negative weight or all-zero weights.
  void validate() const;

  bool operator==(const EmbeddingConfig&) const = default;
};

struct Segment {
  Family family;
  std::size_t offset;
  std::size_t length;

  bool operator==(const Segment&) const = default;
};

std::vector<Segment> make_layout(const EmbeddingConfig& config);

struct EmbeddingVector {
  std::vector<double> values;
  std::vector<Segment> layout;

  std::span<const double> segment(Family f) const;
};

/// Hash each sparse family, L2-normalize each segment (zero stays zero), scale
/// by its weight and concatenate. The result is not re-normalized.
EmbeddingVector build_embedding(const FeatureBundle& bundle, const EmbeddingConfig& config);

double cosine(std::span<const double> a, std::span<const double> b);
/// Throws DimensionError when the layouts differ.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct SearchHit {
  std::string id;
  double score = 0.0;

  bool operator==(const SearchHit&) const = default;
};

/// Immutable once built; rows share `config`'s layout.
class CorpusIndex {
 public:
  CorpusIndex() = default;
  explicit CorpusIndex(EmbeddingConfig config);

  void add(std::string id, const EmbeddingVector& vec);
  void add_row(std::string id, std::vector<double> values);

  const EmbeddingConfig& config() const { return config_; }
  const std::vector<Segment>& layout() const { return layout_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const double> row(std::size_t i) const { return rows_[i]; }

  bool operator==(const CorpusIndex& other) const {
    return config_ == other.config_ && ids_ == other.ids_ && rows_ == other.rows_;
  }

 private:
  EmbeddingConfig config_;
  std::vector<Segment> layout_ = make_layout(config_);
  std::vector<std::string> ids_;
  std::vector<std::vector<double>> rows_;
};

/// Scores descending, ties by ascending id; returns min(k, size) hits.
std::vector<SearchHit> query_topk(const CorpusIndex& index, const EmbeddingVector& query,
                                  std::size_t k);

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

std::string format_index(const CorpusIndex& index);
CorpusIndex parse_index(std::string_view text);
void save_index(const CorpusIndex& index, const std::filesystem::path& path);
CorpusIndex load_index(const std::filesystem::path& path);

}  // namespace rtlguard
