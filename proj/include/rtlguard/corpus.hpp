#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rtlguard {

enum class Category { combinational, sequential, routing, arithmetic, crypto, other };
enum class Subset { non_sensitive, proprietary_marked, diagnostic, test };

std::string_view to_string(Category c);
std::string_view to_string(Subset s);
Category parse_category(std::string_view text);
Subset parse_subset(std::string_view text);

struct RtlDocument {
  std::string id;
  std::string source;
  Category category = Category::other;
  Subset subset = Subset::test;
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;  // as written, relative to the manifest directory
  Category category = Category::other;
  Subset subset = Subset::test;
};

/// Line-oriented corpus listing: `id<TAB>path<TAB>category<TAB>subset`.
/// A `# seed <n>` comment records the synthetic-generation seed.
struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  std::filesystem::path base_dir;

  /// Counts indexed by Subset.
  std::array<std::size_t, 4> subset_counts() const;
};

CorpusManifest load_manifest(const std::filesystem::path& path);
std::string format_manifest(const CorpusManifest& manifest);
/// Reads every entry's source file.
std::vector<RtlDocument> load_documents(const CorpusManifest& manifest);

struct PartitionSpec {
  std::size_t non_sensitive = 0;
  std::size_t proprietary = 0;
  std::size_t diagnostic = 0;
};

struct Partition {
  std::vector<RtlDocument> non_sensitive;
  std::vector<RtlDocument> proprietary;
  std::vector<RtlDocument> diagnostic;
};

/// Seeded split. The diagnostic subset is drawn first so it can never overlap
/// the training subsets; each output document carries its new subset label.
Partition partition(std::span<const RtlDocument> corpus, const PartitionSpec& spec,
                    std::uint64_t seed);

struct CategoryCounts {
  std::size_t combinational = 0;
  std::size_t sequential = 0;
  std::size_t routing = 0;
};

/// Constructs the generator emitted, used as ground truth by parser tests.
struct ConstructCounts {
  int modules = 0;
  int always_blocks = 0;
  int continuous_assigns = 0;
  int instantiations = 0;
  int inputs = 0;
  int outputs = 0;
};

struct SynthDocument {
  RtlDocument doc;
  ConstructCounts truth;
  std::string kind;  // generator template, e.g. "counter", "pipeline3"
};

std::vector<SynthDocument> synth_corpus_detailed(std::uint64_t seed, const CategoryCounts& counts);
std::vector<RtlDocument> synth_corpus(std::uint64_t seed, const CategoryCounts& counts);

}  // namespace rtlguard
