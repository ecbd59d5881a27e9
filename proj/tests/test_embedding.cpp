#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "rtlguard/corpus.hpp"
#include "rtlguard/embedding.hpp"
#include "rtlguard/features.hpp"
#include "rtlguard/io.hpp"
#include "rtlguard/rng.hpp"
#include "support.hpp"
#include "test_paths.hpp"

using namespace rtlguard;

namespace {

EmbeddingVector embed(const std::string& src, const EmbeddingConfig& cfg = {}) {
  return build_embedding(extract_bundle(src, SemanticProvider::hashed_ngram(cfg.dim(Family::semantic))), cfg);
}

double norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(Hashing, StoredVectorsMatch) {
  const auto text = io::read_file(test_data("hash_vectors.tsv"));
  const auto rows = io::lines(text);
  std::size_t checked = 0;
  for (auto row : rows) {
    if (row.empty() || row.front() == '#') continue;
    const auto f = io::split(row, '\t');
    ASSERT_EQ(f.size(), 5u);
    const std::string key(f[0]);
    const auto dim = static_cast<std::size_t>(io::parse_int(f[1]));
    const auto index = static_cast<std::size_t>(io::parse_int(f[3]));
    const double sign = f[4] == "-" ? -1.0 : 1.0;
    EXPECT_EQ(fnv1a64(key), std::stoull(std::string(f[2]), nullptr, 16)) << key;
    const auto v = hash_features({{key, 1.0}}, dim);
    for (std::size_t i = 0; i < dim; ++i) EXPECT_EQ(v[i], i == index ? sign : 0.0) << key << " dim " << dim;
    ++checked;
  }
  EXPECT_GT(checked, 100u);
}

TEST(Hashing, MatchesReferenceOnRandomKeys) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    std::string key(rng.below(40), '\0');
    for (auto& c : key) c = static_cast<char>(rng.below(256));
    EXPECT_EQ(fnv1a64(key), testsupport::fnv1a64_reference(key));
  }
}

TEST(Hashing, EmptyMapGivesZeroVector) { EXPECT_EQ(hash_features({}, 8), std::vector<double>(8, 0.0)); }

TEST(Hashing, LinearInValue) {
  std::vector<double> twice(32, 0.0), once(32, 0.0);
  hash_into("k", 2.0, twice);
  hash_into("k", 2.0, twice);
  hash_into("k", 4.0, once);
  EXPECT_EQ(twice, once);
}

TEST(Hashing, SingleKeyAtIndependentlyComputedCoordinate) {
  const auto v = hash_features({{"ast:module", 1.0}}, 256);
  const auto h = testsupport::fnv1a64_reference("ast:module");
  for (std::size_t i = 0; i < 256; ++i) EXPECT_EQ(v[i], i == h % 256 ? ((h >> 63) ? -1.0 : 1.0) : 0.0);
}

TEST(Hashing, AdditiveOverDisjointKeys) {
  const auto a = hash_features({{"x", 1.5}}, 16);
  const auto b = hash_features({{"y", -2.0}}, 16);
  const auto ab = hash_features({{"x", 1.5}, {"y", -2.0}}, 16);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(ab[i], a[i] + b[i]);
}

TEST(Embedding, LayoutAndSegmentNorms) {
  const auto docs = synth_corpus(1, {0, 6, 0});
  EmbeddingConfig cfg;
  EXPECT_EQ(cfg.total_dim(), 864u);
  for (const auto& d : docs) {
    const auto e = embed(d.source, cfg);
    ASSERT_EQ(e.values.size(), 864u);
    for (Family f : kAllFamilies) {
      const double n = norm(e.segment(f));
      if (n > 0) {
        EXPECT_NEAR(n, cfg.weight(f), 1e-12) << to_string(f);
      }
    }
  }
}

TEST(Embedding, EmptySparseFamiliesStayZero) {
  FeatureBundle b;
  b.semantic.assign(384, 0.0);
  b.semantic[3] = 2.0;
  const auto e = build_embedding(b, EmbeddingConfig{});
  for (Family f : kAllFamilies) {
    if (f == Family::semantic) continue;
    EXPECT_EQ(norm(e.segment(f)), 0.0);
  }
  EXPECT_NEAR(norm(e.segment(Family::semantic)), 0.30, 1e-12);
}

TEST(Embedding, NormalizationAndSegmentIndependence) {
  const auto src = synth_corpus(2, {1, 0, 0})[0].source;
  auto b = extract_bundle(src, SemanticProvider::hashed_ngram(384));
  const auto base = build_embedding(b, {});
  for (auto& [k, v] : b.operators) v *= 2.0;
  const auto doubled = build_embedding(b, {});
  for (Family f : kAllFamilies) {
    const auto x = base.segment(f), y = doubled.segment(f);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], 1e-15);
  }
  b.timing["if"] += 5;
  const auto perturbed = build_embedding(b, {});
  for (Family f : kAllFamilies) {
    if (f == Family::timing) continue;
    const auto x = base.segment(f), y = perturbed.segment(f);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], 1e-15) << to_string(f);
  }
}

TEST(Embedding, ConfigValidation) {
  EmbeddingConfig c;
  c.dims[2] = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.weights[1] = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.weights.fill(0.0);
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Cosine, AnalyticCases) {
  const std::vector<double> a{1, 1, 0}, b{1, 0, 0}, c{0, 0, 3};
  EXPECT_NEAR(cosine(a, b), std::sqrt(0.5), 1e-15);
  EXPECT_EQ(cosine(b, c), 0.0);
  EXPECT_NEAR(cosine(a, a), 1.0, 1e-15);
}

TEST(Cosine, WeightScalingInvariance) {
  const auto docs = synth_corpus(6, {4, 4, 4});
  EmbeddingConfig base, scaled;
  for (auto& w : scaled.weights) w *= 3.5;
  CorpusIndex i1(base), i2(scaled);
  for (const auto& d : docs) {
    i1.add(d.id, embed(d.source, base));
    i2.add(d.id, embed(d.source, scaled));
  }
  for (const auto& d : docs) {
    const auto h1 = query_topk(i1, embed(d.source, base), docs.size());
    const auto h2 = query_topk(i2, embed(d.source, scaled), docs.size());
    ASSERT_EQ(h1.size(), h2.size());
    for (std::size_t i = 0; i < h1.size(); ++i) {
      EXPECT_EQ(h1[i].id, h2[i].id);
      EXPECT_NEAR(h1[i].score, h2[i].score, 1e-12);
    }
  }
}

TEST(Index, SelfRetrievalAndClamp) {
  const auto docs = synth_corpus(3, {3, 3, 3});
  CorpusIndex index;
  for (const auto& d : docs) index.add(d.id, embed(d.source));
  const auto hits = query_topk(index, embed(docs[4].source), 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].id, docs[4].id);
  EXPECT_NEAR(hits[0].score, 1.0, 1e-12);
  const auto all = query_topk(index, embed(docs[0].source), 100);
  ASSERT_EQ(all.size(), docs.size());
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_GE(all[i - 1].score, all[i].score);
}

TEST(Index, TiesBrokenByAscendingId) {
  CorpusIndex index(EmbeddingConfig{});
  const auto total = EmbeddingConfig{}.total_dim();
  std::vector<double> row(total, 0.0);
  row[0] = 1.0;
  index.add_row("zeta", row);
  index.add_row("alpha", row);
  index.add_row("mid", row);
  EmbeddingVector q;
  q.values = row;
  q.layout = make_layout(EmbeddingConfig{});
  const auto hits = query_topk(index, q, 3);
  EXPECT_EQ(hits[0].id, "alpha");
  EXPECT_EQ(hits[1].id, "mid");
  EXPECT_EQ(hits[2].id, "zeta");
}

TEST(Index, DuplicateIdsAndBadK) {
  CorpusIndex index;
  const auto e = embed("module m; endmodule");
  index.add("a", e);
  EXPECT_THROW(index.add("a", e), ConfigError);
  EXPECT_THROW(query_topk(index, e, 0), ConfigError);
}

TEST(IndexIo, RoundTripAndVersionCheck) {
  const auto docs = synth_corpus(4, {1, 1, 1});
  CorpusIndex index;
  for (const auto& d : docs) index.add(d.id, embed(d.source));
  const auto dir = test_dir("index_io");
  save_index(index, dir / "i.cgidx");
  const auto back = load_index(dir / "i.cgidx");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.ids(), index.ids());
  EXPECT_EQ(back.config(), index.config());
  for (std::size_t i = 0; i < 3; ++i) {
    const auto a = index.row(i), b = back.row(i);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  auto text = format_index(index);
  text[0] = 'X';
  EXPECT_THROW(parse_index(text), VersionError);
  const auto good = format_index(index);
  EXPECT_THROW(parse_index(good.substr(0, good.size() / 2)), FormatError);
}

TEST(IndexIo, TwoThousandRowsUnderOneSecond) {
  Rng rng(2);
  CorpusIndex index;
  const auto total = EmbeddingConfig{}.total_dim();
  for (int r = 0; r < 2000; ++r) {
    std::vector<double> row(total, 0.0);
    for (int k = 0; k < 40; ++k) row[rng.below(total)] = rng.normal();
    index.add_row("doc" + std::to_string(r), std::move(row));
  }
  const auto dir = test_dir("index_big");
  const auto t0 = std::chrono::steady_clock::now();
  save_index(index, dir / "big.cgidx");
  const auto back = load_index(dir / "big.cgidx");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(back.size(), 2000u);
  EXPECT_LT(secs, 1.0);
}
