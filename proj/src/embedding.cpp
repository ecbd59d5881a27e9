#include "rtlguard/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "rtlguard/io.hpp"

namespace rtlguard {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void hash_into(std::string_view key, double value, std::span<double> out) {
  const std::uint64_t h = fnv1a64(key);
  const std::size_t index = static_cast<std::size_t>(h % out.size());
  const double sign = (h >> 63) ? -1.0 : 1.0;
  out[index] += sign * value;
}

std::vector<double> hash_features(const SparseFeatures& features, std::size_t dim) {
  if (dim == 0) throw ConfigError("hash dimension must be >= 1");
  std::vector<double> out(dim, 0.0);
  for (const auto& [key, value] : features) hash_into(key, value, out);
  return out;
}

std::size_t EmbeddingConfig::total_dim() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{0});
}

void EmbeddingConfig::validate() const {
  bool any_positive = false;
  for (std::size_t i = 0; i < kFamilyCount; ++i) {
    const auto name = std::string(to_string(kAllFamilies[i]));
    if (dims[i] < 1) throw ConfigError("embedding dimension for " + name + " must be >= 1");
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw ConfigError("embedding weight for " + name + " must be finite and >= 0");
    }
    any_positive = any_positive || weights[i] > 0.0;
  }
  if (!any_positive) throw ConfigError("at least one embedding weight must be > 0");
}

std::vector<Segment> make_layout(const EmbeddingConfig& config) {
  std::vector<Segment> layout;
  std::size_t offset = 0;
  for (Family f : kAllFamilies) {
    layout.push_back({f, offset, config.dim(f)});
    offset += config.dim(f);
  }
  return layout;
}

std::span<const double> EmbeddingVector::segment(Family f) const {
  const auto& s = layout.at(static_cast<std::size_t>(f));
  return std::span<const double>(values).subspan(s.offset, s.length);
}

EmbeddingVector build_embedding(const FeatureBundle& bundle, const EmbeddingConfig& config) {
  config.validate();
  if (bundle.semantic.size() != config.dim(Family::semantic)) {
    throw DimensionError("semantic vector has dimension " + std::to_string(bundle.semantic.size()) +
                         ", config expects " + std::to_string(config.dim(Family::semantic)));
  }
  EmbeddingVector out;
  out.layout = make_layout(config);
  out.values.assign(config.total_dim(), 0.0);
  for (const auto& seg : out.layout) {
    std::span<double> dst(out.values.data() + seg.offset, seg.length);
    if (seg.family == Family::semantic) {
      std::copy(bundle.semantic.begin(), bundle.semantic.end(), dst.begin());
    } else {
      for (const auto& [key, value] : bundle.sparse(seg.family)) hash_into(key, value, dst);
    }
    double norm2 = 0.0;
    for (double v : dst) norm2 += v * v;
    if (norm2 > 0.0) {
      const double scale = config.weight(seg.family) / std::sqrt(norm2);
      for (double& v : dst) v *= scale;
    }
  }
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine of vectors with different lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.layout != b.layout) throw DimensionError("embedding layouts differ");
  return cosine(std::span<const double>(a.values), std::span<const double>(b.values));
}

CorpusIndex::CorpusIndex(EmbeddingConfig config) : config_(config), layout_(make_layout(config)) {
  config_.validate();
}

void CorpusIndex::add(std::string id, const EmbeddingVector& vec) {
  if (vec.layout != layout_) throw DimensionError("embedding layout does not match index config");
  add_row(std::move(id), vec.values);
}

void CorpusIndex::add_row(std::string id, std::vector<double> values) {
  if (values.size() != config_.total_dim()) {
    throw DimensionError("row '" + id + "' has " + std::to_string(values.size()) +
                         " values, expected " + std::to_string(config_.total_dim()));
  }
  if (std::find(ids_.begin(), ids_.end(), id) != ids_.end()) {
    throw ConfigError("duplicate index id '" + id + "'");
  }
  ids_.push_back(std::move(id));
  rows_.push_back(std::move(values));
}

std::vector<SearchHit> query_topk(const CorpusIndex& index, const EmbeddingVector& query,
                                  std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (query.layout != index.layout()) throw DimensionError("query layout does not match index");
  std::vector<SearchHit> hits;
  hits.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    hits.push_back({index.ids()[i], cosine(index.row(i), std::span<const double>(query.values))});
  }
  std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  hits.resize(std::min(k, hits.size()));
  return hits;
}

// ---------------------------------------------------------------------------
// Persistence: pure text, one row per line.

namespace {
constexpr std::string_view kIndexMagic = "CGIX1";
}

std::string format_index(const CorpusIndex& index) {
  std::string out;
  out += kIndexMagic;
  out += "\nfamilies ";
  out += std::to_string(kFamilyCount);
  out += '\n';
  for (Family f : kAllFamilies) {
    out += to_string(f);
    out += '\t';
    out += std::to_string(index.config().dim(f));
    out += '\t';
    out += io::format_double(index.config().weight(f));
    out += '\n';
  }
  out += "rows " + std::to_string(index.size()) + "\n";
  for (std::size_t i = 0; i < index.size(); ++i) {
    out += index.ids()[i];
    out += '\t';
    out += io::join_doubles(index.row(i));
    out += '\n';
  }
  return out;
}

CorpusIndex parse_index(std::string_view text) {
  io::Reader in(text);
  if (text.empty()) throw FormatError("empty index file");
  const auto magic = in.line();
  if (magic != kIndexMagic) {
    throw VersionError("index file has magic '" + std::string(magic.substr(0, 16)) +
                       "', expected CGIX1");
  }
  auto header = io::split(in.line(), ' ');
  if (header.size() != 2 || header[0] != "families" ||
      io::parse_int(header[1]) != static_cast<long long>(kFamilyCount)) {
    throw FormatError("index file: bad families header");
  }
  EmbeddingConfig config;
  for (std::size_t i = 0; i < kFamilyCount; ++i) {
    auto fields = io::split(in.line(), '\t');
    if (fields.size() != 3 || parse_family(fields[0]) != kAllFamilies[i]) {
      throw FormatError("index file: bad family line " + std::to_string(i));
    }
    config.dims[i] = static_cast<std::size_t>(io::parse_int(fields[1]));
    config.weights[i] = io::parse_double(fields[2]);
  }
  auto rows_line = io::split(in.line(), ' ');
  if (rows_line.size() != 2 || rows_line[0] != "rows") throw FormatError("index file: bad rows header");
  const auto n_rows = io::parse_int(rows_line[1]);
  CorpusIndex index(config);
  for (long long r = 0; r < n_rows; ++r) {
    auto ln = in.line();
    auto tab = ln.find('\t');
    if (tab == std::string_view::npos) throw FormatError("index file: malformed row " + std::to_string(r));
    auto values = io::split_doubles(ln.substr(tab + 1));
    if (values.size() != config.total_dim()) {
      throw FormatError("index file: truncated row " + std::to_string(r));
    }
    index.add_row(std::string(ln.substr(0, tab)), std::move(values));
  }
  if (!in.done()) throw FormatError("index file: trailing data after rows");
  return index;
}

void save_index(const CorpusIndex& index, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_index(index));
}

CorpusIndex load_index(const std::filesystem::path& path) { return parse_index(io::read_file(path)); }

}  // namespace rtlguard
