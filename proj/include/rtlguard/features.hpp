#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "rtlguard/error.hpp"

namespace rtlguard {

/// Named feature counts. Ordered so iteration (and therefore hashing) is
/// deterministic; zero-valued entries are never stored.
using SparseFeatures = std::map<std::string, double>;

/// The nine feature families, in embedding layout order.
enum class Family : std::uint8_t {
  semantic,
  ast,
  circuit,
  connectivity,
  timing,
  patterns,
  operators,
  lexical,
  graph,
};

inline constexpr std::size_t kFamilyCount = 9;
inline constexpr std::array<Family, kFamilyCount> kAllFamilies{
    Family::semantic, Family::ast,       Family::circuit, Family::connectivity, Family::timing,
    Family::patterns, Family::operators, Family::lexical, Family::graph};

std::string_view to_string(Family f);
Family parse_family(std::string_view name);

struct FeatureBundle {
  std::vector<double> semantic;
  SparseFeatures ast;
  SparseFeatures circuit;
  SparseFeatures connectivity;
  SparseFeatures timing;
  SparseFeatures patterns;
  SparseFeatures operators;
  SparseFeatures lexical;
  SparseFeatures graph;
  /// Set iff parse_rtl raised; families then come from the token stream only.
  bool parse_failed = false;

  const SparseFeatures& sparse(Family f) const;
  SparseFeatures& sparse(Family f);

  bool operator==(const FeatureBundle&) const = default;
};

/// Raised when the semantic-vector provider cannot produce a vector.
class ProviderError : public Error {
 public:
  using Error::Error;
};

/// Vectors keyed by document id, read from `id<TAB>d<TAB>v1,...,vd` lines.
struct PrecomputedVectors {
  std::size_t dim = 0;
  std::map<std::string, std::vector<double>> vectors;
};

PrecomputedVectors parse_precomputed_vectors(std::string_view text);
PrecomputedVectors load_precomputed_vectors(const std::filesystem::path& path);
std::string format_precomputed_vectors(const PrecomputedVectors& table);

class SemanticProvider {
 public:
  enum class Kind { hashed_ngram, precomputed };

  /// Signed-hashed character 3-gram term frequencies.
  static SemanticProvider hashed_ngram(std::size_t dim);
  static SemanticProvider precomputed(PrecomputedVectors table);

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  const PrecomputedVectors* table() const { return table_.get(); }

 private:
  Kind kind_ = Kind::hashed_ngram;
  std::size_t dim_ = 0;
  std::shared_ptr<const PrecomputedVectors> table_;
};

std::vector<double> semantic_vector(std::string_view source, const SemanticProvider& provider,
                                    std::string_view doc_id = {});

struct ExtractOptions {
  /// Distinct identifiers kept in the lexical family (most frequent first).
  std::size_t identifier_cap = 50;
};

FeatureBundle extract_bundle(std::string_view source, const SemanticProvider& provider,
                             std::string_view doc_id = {}, const ExtractOptions& options = {});

}  // namespace rtlguard
