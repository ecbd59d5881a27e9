// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and budgets
// are fixed here, not read from the configuration under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rtlguard/config.hpp"
#include "rtlguard/corpus.hpp"
#include "rtlguard/embedding.hpp"
#include "rtlguard/features.hpp"
#include "rtlguard/io.hpp"
#include "rtlguard/lm.hpp"
#include "rtlguard/pipeline.hpp"
#include "rtlguard/quality.hpp"
#include "rtlguard/sae.hpp"
#include "rtlguard/steering.hpp"
#include "support.hpp"

using namespace rtlguard;
namespace fs = std::filesystem;

namespace {

// Budgets (seconds) and tolerances.
constexpr double kHashBudget = 1.0;
constexpr double kRobustnessBudget = 30.0;
constexpr double kSaeBudget = 300.0;
constexpr double kPlantedBudget = 120.0;
constexpr double kPipelineBudget = 1800.0;
constexpr double kRenamedTop1 = 1.0;
constexpr double kPerturbedTop1 = 0.90;
constexpr double kMaxRelMse = 0.05;
constexpr double kAtomCosine = 0.9;
constexpr double kAtomFraction = 0.80;
constexpr double kMaxGradError = 1e-4;
constexpr double kTopFraction = 0.01;
constexpr double kPlantedHitRate = 0.95;
constexpr double kLinearityTol = 1e-6;
constexpr double kRegurgitation = 0.8;
constexpr std::size_t kMinMemorized = 16;
constexpr double kMinReduction = 0.5;
constexpr double kMinQuality = 6.0;
constexpr double kMaxPplIncrease = 0.25;
constexpr double kMonotoneTol = 1e-9;
constexpr double kMinEffectiveness = 50.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const Outcome& o) {
  std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

void guarded(const std::string& name, const std::function<Outcome()>& fn) {
  try {
    report(name, fn());
  } catch (const std::exception& e) {
    report(name, {false, std::string("exception: ") + e.what()});
  }
}

std::string read(const fs::path& p) { return io::read_file(p); }

std::vector<std::vector<std::string>> read_table(const fs::path& p, char sep) {
  const auto text = read(p);
  std::vector<std::vector<std::string>> rows;
  for (auto line : io::lines(text)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    for (auto f : io::split(line, sep)) row.emplace_back(f);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::map<std::string, std::string> read_kv(const fs::path& p) {
  std::map<std::string, std::string> out;
  for (const auto& row : read_table(p, '\t')) {
    if (row.size() == 2) out[row[0]] = row[1];
  }
  return out;
}

// ---------------------------------------------------------------- hashing

Outcome hashing() {
  const auto t0 = Clock::now();
  std::size_t rows = 0, bad = 0;
  for (const auto& f : read_table(fs::path(RTLGUARD_TEST_DATA) / "hash_vectors.tsv", '\t')) {
    if (f[0].front() == '#') continue;
    ++rows;
    const auto dim = static_cast<std::size_t>(std::stoull(f[1]));
    const auto index = static_cast<std::size_t>(std::stoull(f[3]));
    const double sign = f[4] == "-" ? -1.0 : 1.0;
    bool ok = fnv1a64(f[0]) == std::stoull(f[2], nullptr, 16);
    const auto v = hash_features({{f[0], 1.0}}, dim);
    for (std::size_t i = 0; i < dim; ++i) ok = ok && v[i] == (i == index ? sign : 0.0);
    bad += !ok;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && rows > 0 && secs < kHashBudget,
          std::to_string(rows - bad) + "/" + std::to_string(rows) + " vectors bit-exact, " + fmt("%.3f s", secs)};
}

// ---------------------------------------------------------------- embedding robustness

struct RetrievalScore {
  double renamed = 0;
  double perturbed = 0;
  std::size_t structural_mismatch = 0;
};

constexpr Family kStructural[] = {Family::ast,      Family::circuit,   Family::connectivity, Family::timing,
                                  Family::patterns, Family::operators, Family::graph};

/// Pairs of documents whose structural sparse maps all coincide.
std::size_t structural_twins(const std::vector<RtlDocument>& docs) {
  const auto provider = SemanticProvider::hashed_ngram(16);
  std::vector<FeatureBundle> bundles;
  for (const auto& d : docs) bundles.push_back(extract_bundle(d.source, provider));
  std::size_t twins = 0;
  for (std::size_t i = 0; i < docs.size(); ++i)
    for (std::size_t j = i + 1; j < docs.size(); ++j)
      twins += std::all_of(std::begin(kStructural), std::end(kStructural),
                           [&](Family f) { return bundles[i].sparse(f) == bundles[j].sparse(f); });
  return twins;
}

RetrievalScore retrieval(const std::vector<RtlDocument>& docs, const EmbeddingConfig& cfg) {
  const auto provider = SemanticProvider::hashed_ngram(cfg.dim(Family::semantic));
  CorpusIndex index(cfg);
  for (const auto& d : docs) index.add(d.id, build_embedding(extract_bundle(d.source, provider), cfg));
  RetrievalScore s;
  std::size_t renamed = 0, perturbed = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto original = build_embedding(extract_bundle(docs[i].source, provider), cfg);
    const auto r = build_embedding(extract_bundle(testsupport::rename_identifiers(docs[i].source, 100 + i), provider), cfg);
    const auto p = build_embedding(extract_bundle(testsupport::perturb_layout(docs[i].source, 200 + i), provider), cfg);
    renamed += query_topk(index, r, 1).front().id == docs[i].id;
    perturbed += query_topk(index, p, 1).front().id == docs[i].id;
    for (Family f : kStructural) {
      const auto a = original.segment(f), b = r.segment(f);
      if (!std::equal(a.begin(), a.end(), b.begin(), b.end())) ++s.structural_mismatch;
    }
  }
  s.renamed = static_cast<double>(renamed) / static_cast<double>(docs.size());
  s.perturbed = static_cast<double>(perturbed) / static_cast<double>(docs.size());
  return s;
}

Outcome embedding_robustness() {
  const auto t0 = Clock::now();
  const auto docs = synth_corpus(2024, {17, 17, 16});
  EmbeddingConfig uniform;
  uniform.weights.fill(1.0 / 9.0);
  const auto a = retrieval(docs, EmbeddingConfig{});
  const auto b = retrieval(docs, uniform);
  const double secs = seconds_since(t0);
  const bool ok = docs.size() == 50 && a.renamed >= kRenamedTop1 && b.renamed >= kRenamedTop1 &&
                  a.perturbed >= kPerturbedTop1 && b.perturbed >= kPerturbedTop1 && a.structural_mismatch == 0 &&
                  b.structural_mismatch == 0 && secs < kRobustnessBudget;
  return {ok, "renamed top-1 " + fmt("%.0f%%", 100 * a.renamed) + " (uniform weights " + fmt("%.0f%%", 100 * b.renamed) +
                  "), perturbed top-1 " + fmt("%.0f%%", 100 * a.perturbed) + " (" + fmt("%.0f%%", 100 * b.perturbed) +
                  "), structural segment mismatches " + std::to_string(a.structural_mismatch + b.structural_mismatch) +
                  ", structurally identical doc pairs " + std::to_string(structural_twins(docs)) + ", " +
                  fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------- SAE

double worst_gradient_error(std::uint64_t seed) {
  Rng rng(seed);
  SparseAutoencoder s(0, 4, 8, 0.05);
  for (auto& v : s.encoder_weights()) v = rng.normal() * 0.5;
  for (auto& v : s.encoder_bias()) v = rng.normal() * 0.1;
  for (auto& v : s.decoder_weights()) v = rng.normal() * 0.5;
  for (auto& v : s.decoder_bias()) v = rng.normal() * 0.1;
  std::vector<std::vector<double>> batch(8, std::vector<double>(4));
  for (auto& x : batch)
    for (auto& v : x) v = rng.normal();
  SaeGradients g;
  sae_gradients(s, batch, g);
  const double eps = 1e-6;
  double worst = 0;
  auto check = [&](std::span<double> params, const std::vector<double>& grad) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = params[i];
      params[i] = keep + eps;
      const double up = sae_loss(s, batch).total;
      params[i] = keep - eps;
      const double down = sae_loss(s, batch).total;
      params[i] = keep;
      const double numeric = (up - down) / (2 * eps);
      // relative error with a floor so zero gradients compare absolutely
      const double scale = std::max({std::fabs(numeric), std::fabs(grad[i]), 1e-3});
      worst = std::max(worst, std::fabs(numeric - grad[i]) / scale);
    }
  };
  check(s.encoder_weights(), g.we);
  check(s.encoder_bias(), g.be);
  check(s.decoder_weights(), g.wd);
  check(s.decoder_bias(), g.bd);
  return worst;
}

Outcome sae_recovery() {
  const auto t0 = Clock::now();
  const auto planted = testsupport::planted_dictionary(64, 8, 3, 4000, 11);
  SaeTrainOptions o;
  o.latents = 512;
  o.lambda = 0.03;
  o.steps = 3000;
  o.learning_rate = 1e-3;
  o.batch = 64;
  o.seed = 3;
  const auto sae = train_sae(planted.samples, o);
  const double rel = relative_mse(sae, planted.samples);
  std::size_t recovered = 0;
  for (const auto& atom : planted.atoms) {
    double best = -1;
    for (std::size_t j = 0; j < sae.latent_dim(); ++j) best = std::max(best, testsupport::cosine(atom, sae.column(j)));
    recovered += best >= kAtomCosine;
  }
  double grad = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) grad = std::max(grad, worst_gradient_error(seed));
  const double secs = seconds_since(t0);
  const double frac = static_cast<double>(recovered) / static_cast<double>(planted.atoms.size());
  return {rel <= kMaxRelMse && frac >= kAtomFraction && grad <= kMaxGradError && secs < kSaeBudget,
          "relative MSE " + fmt("%.4f", rel) + ", atoms recovered " + std::to_string(recovered) + "/8, worst gradient error " +
              fmt("%.2e", grad) + ", " + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------- planted direction

Outcome planted_direction() {
  const auto t0 = Clock::now();
  constexpr std::size_t d = 64, m = 512, n = 400;
  const auto max_rank = static_cast<std::size_t>(kTopFraction * static_cast<double>(m));
  std::size_t hits = 0;
  std::vector<std::size_t> ranks;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto base = testsupport::planted_dictionary(d, 8, 3, 2 * n, 100 + seed);
    Rng rng(500 + seed);
    std::vector<double> v(d);
    double norm = 0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
    for (auto& x : v) x /= std::sqrt(norm);
    std::vector<std::vector<double>> p(base.samples.begin(), base.samples.begin() + n);
    const std::vector<std::vector<double>> dset(base.samples.begin() + n, base.samples.end());
    for (auto& h : p) {
      const double c = rng.uniform(0.5, 1.5);
      for (std::size_t i = 0; i < d; ++i) h[i] += c * v[i];
    }
    auto all = p;
    all.insert(all.end(), dset.begin(), dset.end());
    SaeTrainOptions o;
    o.latents = m;
    o.lambda = 0.03;
    o.steps = 800;
    o.learning_rate = 3e-3;
    o.batch = 64;
    o.seed = seed;
    const auto sae = train_sae(all, o);
    LayerCodes pc, dc;
    for (const auto& h : p) pc[1].push_back(sae.encode(std::span<const double>(h)));
    for (const auto& h : dset) dc[1].push_back(sae.encode(std::span<const double>(h)));
    const auto delta = compute_deltas(pc, dc).at(1);
    std::size_t aligned = 0;
    double best = -2;
    for (std::size_t j = 0; j < m; ++j) {
      const double c = testsupport::cosine(v, sae.column(j));
      if (c > best) {
        best = c;
        aligned = j;
      }
    }
    std::size_t rank = 1;
    for (std::size_t j = 0; j < m; ++j) rank += delta[j] > delta[aligned];
    ranks.push_back(rank);
    hits += rank <= max_rank;
  }
  const double secs = seconds_since(t0);
  std::string detail = std::to_string(hits) + "/20 trials rank the aligned latent in the top " + std::to_string(max_rank) +
                       " of " + std::to_string(m) + " (ranks";
  for (auto r : ranks) detail += " " + std::to_string(r);
  detail += "), " + fmt("%.1f s", secs);
  return {static_cast<double>(hits) / 20.0 >= kPlantedHitRate && secs < kPlantedBudget, detail};
}

// ---------------------------------------------------------------- pipeline artifacts

struct Artifacts {
  PipelineConfig config;
  Layout layout;
  LanguageModel model{LmConfig{}};
  std::map<int, SparseAutoencoder> saes;
  FeatureSelection selection;
  std::vector<RtlDocument> docs;

  std::vector<RtlDocument> subset(Subset s) const {
    std::vector<RtlDocument> out;
    for (const auto& d : docs)
      if (d.subset == s) out.push_back(d);
    return out;
  }
};

Artifacts load_artifacts(const PipelineConfig& config) {
  Artifacts a;
  a.config = config;
  a.layout = Layout{config.out};
  a.model = load_checkpoint(a.layout.model());
  for (int l = 1; l <= a.model.config().layers; ++l) {
    if (fs::exists(a.layout.sae(l))) a.saes.emplace(l, load_sae(a.layout.sae(l)));
  }
  a.selection = load_selection(a.layout.selection());
  a.docs = load_documents(load_manifest(a.layout.manifest()));
  return a;
}

int run_cli_all(const PipelineConfig& config, const fs::path& out) {
  const std::string cmd = std::string(RTLGUARD_CLI) + " --config " + RTLGUARD_ACCEPTANCE_CONFIG + " --out " +
                          out.string() + " all > " + (out.string() + ".log") + " 2>&1";
  (void)config;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome identity_linearity(const Artifacts& a) {
  const auto probes = a.subset(Subset::proprietary_marked);
  DecodeConfig decode = a.config.decode();
  SteeringConfig zero = a.config.steering;
  zero.alpha = 0.0;
  zero.k = 0;
  const auto hooks = make_steering_hooks(a.saes, a.selection, zero);
  std::size_t identical = 0;
  std::vector<std::string> prompts;
  for (const auto& d : probes) {
    const auto p = make_probe(d.id, d.source, a.config.prompt_fraction);
    prompts.push_back(p.prompt);
    identical += generate(a.model, p.prompt, decode, hooks) == generate(a.model, p.prompt, decode);
  }
  // Linearity per edit: the same captured residual edited at alpha 0.5 and 1.
  std::vector<TapSpec> taps;
  for (const auto& [layer, list] : a.selection.layers) taps.push_back({layer, Tap::residual});
  double worst_ratio = 0;
  std::size_t edits = 0;
  for (const auto& p : prompts) {
    const auto acts = capture_activations(a.model, p, taps);
    for (const auto& t : taps) {
      const auto& sae = a.saes.at(t.layer);
      const auto& list = a.selection.layers.at(t.layer);
      for (const auto& hf : acts.at(t.layer, Tap::residual)) {
        const std::vector<double> h(hf.begin(), hf.end());
        double nh = 0, nf = 0;
        const auto eh = edit_activation(h, sae, list, 0.5, EditMode::decode_difference, a.config.steering.weighting);
        const auto ef = edit_activation(h, sae, list, 1.0, EditMode::decode_difference, a.config.steering.weighting);
        for (std::size_t i = 0; i < h.size(); ++i) {
          nh += (eh[i] - h[i]) * (eh[i] - h[i]);
          nf += (ef[i] - h[i]) * (ef[i] - h[i]);
        }
        if (nh == 0) continue;
        ++edits;
        worst_ratio = std::max(worst_ratio, std::fabs(std::sqrt(nf / nh) - 2.0) / 2.0);
      }
    }
  }
  // Stability: repeated fixed-seed runs give identical per-layer edit norms.
  const auto stats = delta_norm_stats(a.model, a.saes, a.selection, a.config.steering, prompts, a.config.norm_runs, decode);
  double worst_std = 0;
  for (const auto& [layer, s] : stats) worst_std = std::max(worst_std, s.std);
  // the per-run norms written by the steer stage
  for (const auto& row : read_table(a.layout.delta_norms(), '\t')) {
    if (row[0] == "layer") continue;
    worst_std = std::max(worst_std, std::stod(row[2]));
  }
  const bool ok = identical == probes.size() && edits > 0 && worst_ratio <= kLinearityTol && worst_std == 0.0;
  return {ok, std::to_string(identical) + "/" + std::to_string(probes.size()) +
                  " alpha=0 generations byte-identical, worst |ratio/2 - 1| " + fmt("%.2e", worst_ratio) + " over " +
                  std::to_string(edits) + " edits, max edit-norm std across " + std::to_string(a.config.norm_runs) +
                  " runs " + fmt("%.3g", worst_std)};
}

Outcome mitigation(const Artifacts& a, double cli_seconds) {
  const auto decode = a.config.decode();
  const auto docs = a.subset(Subset::proprietary_marked);
  std::vector<Probe> probes;
  for (const auto& d : docs) probes.push_back(make_probe(d.id, d.source, a.config.prompt_fraction));
  std::size_t memorized = 0;
  std::vector<std::string> base_cont;
  for (const auto& p : probes) {
    base_cont.push_back(generate(a.model, p.prompt, decode));
    memorized += regurgitation_ratio(base_cont.back(), p.reference) >= kRegurgitation;
  }
  std::string detail = std::to_string(memorized) + "/" + std::to_string(probes.size()) + " memorized";
  bool ok = memorized >= kMinMemorized && probes.size() >= 20;

  const auto op = read_kv(a.layout.operating_point());
  if (op.at("feasible") != "true") {
    return {false, detail + "; no feasible operating point in the sweep grid, cli all " + fmt("%.0f s", cli_seconds)};
  }
  SteeringConfig sc = a.config.steering;
  sc.k = std::stoul(op.at("k"));
  sc.alpha = std::stod(op.at("alpha"));
  const auto hooks = make_steering_hooks(a.saes, a.selection, sc);
  double sim0 = 0, sim1 = 0, q1 = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto steered = generate(a.model, probes[i].prompt, decode, hooks);
    sim0 += text_similarity(base_cont[i], probes[i].reference, a.config.embedding);
    sim1 += text_similarity(steered, probes[i].reference, a.config.embedding);
    q1 += evaluate_quality(probes[i].prompt + steered);
  }
  const double n = static_cast<double>(probes.size());
  sim0 /= n;
  sim1 /= n;
  q1 /= n;
  std::vector<std::string> held_out;
  for (const auto& d : a.subset(Subset::diagnostic)) held_out.push_back(d.source);
  const double ppl0 = perplexity(a.model, held_out);
  const double ppl1 = perplexity(a.model, held_out, hooks);
  const double reduction = 1.0 - sim1 / sim0;
  const double ppl_inc = ppl1 / ppl0 - 1.0;
  ok = ok && reduction >= kMinReduction && q1 >= kMinQuality && ppl_inc <= kMaxPplIncrease &&
       cli_seconds < kPipelineBudget;
  detail += "; operating point K=" + op.at("k") + " alpha=" + op.at("alpha") + ": similarity " + fmt("%.3f", sim0) +
            " -> " + fmt("%.3f", sim1) + " (reduction " + fmt("%.1f%%", 100 * reduction) + "), quality " +
            fmt("%.2f", q1) + ", held-out perplexity " + fmt("%+.1f%%", 100 * ppl_inc) + ", cli all " +
            fmt("%.0f s", cli_seconds);
  return {ok, detail};
}

Outcome sweep_monotonicity(const Artifacts& a) {
  const auto recs = parse_sweep_csv(read(a.layout.sweep_csv()));
  std::map<std::size_t, std::map<double, double>> grid;
  for (const auto& r : recs) grid[r.k][r.alpha] = r.sem_diff;
  std::size_t pairs = 0, violations = 0;
  for (const auto& [k, row] : grid) {
    double prev = -1;
    for (const auto& [alpha, v] : row) {
      if (prev >= 0) {
        ++pairs;
        violations += v + kMonotoneTol < prev;
      }
      prev = v;
    }
  }
  std::set<double> alphas;
  for (const auto& [k, row] : grid)
    for (const auto& [alpha, v] : row) alphas.insert(alpha);
  for (double alpha : alphas) {
    double prev = -1;
    for (const auto& [k, row] : grid) {
      const double v = row.at(alpha);
      if (prev >= 0) {
        ++pairs;
        violations += v + kMonotoneTol < prev;
      }
      prev = v;
    }
  }

  struct Row {
    SteeringPoint knee, oversteer;
  };
  const Row reference[] = {
      {{0.9, 10, 7.70}, {1.5, 90, 4.00}}, {{0.5, 20, 7.70}, {1.1, 80, 6.00}}, {{0.7, 40, 7.40}, {0.9, 80, 6.10}},
      {{0.9, 50, 7.90}, {1.3, 90, 5.20}}, {{1.3, 80, 7.50}, {1.5, 90, 4.60}}, {{0.9, 50, 7.50}, {1.1, 80, 6.10}},
  };
  std::size_t matched = 0;
  for (const auto& row : reference) {
    const auto r = detect_knee_oversteer({row.knee, row.oversteer});
    matched += r.knee && *r.knee == row.knee;
    matched += r.oversteer && *r.oversteer == row.oversteer;
  }
  const bool ok = pairs > 0 && violations == 0 && matched == 12;
  return {ok, std::to_string(violations) + "/" + std::to_string(pairs) + " adjacent grid pairs decrease; " +
                  std::to_string(matched) + "/12 reference knee/oversteer points reproduced"};
}

Outcome transfer(const Artifacts& a) {
  const auto rows = read_table(a.layout.transfer(), ',');
  std::size_t defined = 0, passing = 0;
  std::string list;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    list += " K=" + f[0] + ":" + (f[9] == "nan" ? std::string("n/a") : fmt("%.1f%%", std::stod(f[9])));
    if (f[9] == "nan") continue;
    ++defined;
    passing += std::stod(f[9]) >= kMinEffectiveness;
  }
  const auto report_text = read(a.layout.report());
  const bool both_rates = report_text.find("| K | Transferred | Rate (%) |") != std::string::npos &&
                          rows.size() > 1 && rows[0][2] == "transferred" && rows[0][5] == "rate_pct";
  return {defined > 0 && passing == defined && both_rates,
          std::to_string(passing) + "/" + std::to_string(defined) + " defined rows reach " +
              fmt("%.0f%%", kMinEffectiveness) + " effectiveness (" + list.substr(1) + "); report rates " +
              (both_rates ? "present" : "missing")};
}

Outcome determinism(const fs::path& a, const fs::path& b) {
  std::map<std::string, std::string> fa, fb;
  for (const auto& [root, files] : {std::pair{a, &fa}, std::pair{b, &fb}}) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file()) (*files)[fs::relative(e.path(), root).generic_string()] = read(e.path());
    }
  }
  std::size_t differing = 0;
  std::string first;
  std::set<std::string> names;
  for (const auto& [k, v] : fa) names.insert(k);
  for (const auto& [k, v] : fb) names.insert(k);
  for (const auto& n : names) {
    const auto ia = fa.find(n), ib = fb.find(n);
    if (ia == fa.end() || ib == fb.end() || ia->second != ib->second) {
      if (differing++ == 0) first = n;
    }
  }
  return {differing == 0 && !fa.empty(), std::to_string(names.size()) + " files compared, " + std::to_string(differing) +
                                             " differ" + (first.empty() ? "" : " (first: " + first + ")")};
}

}  // namespace

int main() {
  guarded("hashing bit-exactness", hashing);
  guarded("embedding robustness", embedding_robustness);
  guarded("SAE planted-dictionary recovery", sae_recovery);
  guarded("planted-direction identification", planted_direction);

  const fs::path scratch = fs::path(RTLGUARD_TEST_SCRATCH) / "acceptance";
  const fs::path run_a = scratch / "run_a", run_b = scratch / "run_b";
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  auto config = load_config(RTLGUARD_ACCEPTANCE_CONFIG);

  const auto t0 = Clock::now();
  const int status_a = run_cli_all(config, run_a);
  const double cli_seconds = seconds_since(t0);
  const int status_b = run_cli_all(config, run_b);

  if (status_a != 0 || status_b != 0) {
    const std::string why = "cli all exited with " + std::to_string(status_a) + "/" + std::to_string(status_b) +
                            ", see " + run_a.string() + ".log";
    for (const char* name : {"steering identity and linearity", "memorization mitigation", "sweep monotonicity",
                             "cross-domain transfer", "determinism audit"}) {
      report(name, {false, why});
    }
    return 1;
  }

  config.out = run_a;
  std::optional<Artifacts> art;
  try {
    art = load_artifacts(config);
  } catch (const std::exception& e) {
    std::printf("could not load pipeline artifacts: %s\n", e.what());
  }
  auto with_artifacts = [&](const std::string& name, const std::function<Outcome(const Artifacts&)>& fn) {
    guarded(name, [&] { return art ? fn(*art) : Outcome{false, "artifacts unavailable"}; });
  };
  with_artifacts("steering identity and linearity", identity_linearity);
  with_artifacts("memorization mitigation", [&](const Artifacts& a) { return mitigation(a, cli_seconds); });
  with_artifacts("sweep monotonicity", sweep_monotonicity);
  with_artifacts("cross-domain transfer", transfer);
  guarded("determinism audit", [&] { return determinism(run_a, run_b); });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
