#include "rtlguard/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "rtlguard/corpus.hpp"
#include "rtlguard/features.hpp"
#include "rtlguard/io.hpp"
#include "rtlguard/lm.hpp"
#include "rtlguard/quality.hpp"
#include "rtlguard/sae.hpp"
#include "rtlguard/steering.hpp"

namespace rtlguard {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 10> kStageNames{"synth",    "embed", "train-lm", "activations", "sae-train",
                                                       "identify", "steer", "sweep",    "transfer",    "report"};

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void emit(const fs::path& path, std::string_view content) {
  fs::create_directories(path.parent_path());
  io::write_file_atomic(path, content);
}

void require(const fs::path& path, Stage producer) {
  if (!fs::exists(path)) {
    throw MissingArtifactError(std::string(to_string(producer)), "missing artifact " + path.generic_string());
  }
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

struct Corpus {
  CorpusManifest manifest;
  std::vector<RtlDocument> docs;

  std::vector<const RtlDocument*> subset(Subset s) const {
    std::vector<const RtlDocument*> out;
    for (const auto& d : docs) {
      if (d.subset == s) out.push_back(&d);
    }
    return out;
  }

  std::vector<const RtlDocument*> training() const {
    std::vector<const RtlDocument*> out;
    for (const auto& d : docs) {
      if (d.subset == Subset::non_sensitive || d.subset == Subset::proprietary_marked) out.push_back(&d);
    }
    return out;
  }
};

Corpus load_corpus(const PipelineConfig& config) {
  Corpus c;
  if (!config.manifest.empty()) {
    c.manifest = load_manifest(config.manifest);
  } else {
    const Layout layout{config.out};
    require(layout.manifest(), Stage::synth);
    c.manifest = load_manifest(layout.manifest());
  }
  c.docs = load_documents(c.manifest);
  return c;
}

std::vector<std::string> sources(const std::vector<const RtlDocument*>& docs) {
  std::vector<std::string> out;
  for (const auto* d : docs) out.push_back(d->source);
  return out;
}

/// Leading bytes that fit one forward pass after BOS.
std::string_view fit_context(std::string_view text, const LmConfig& lm) {
  return text.substr(0, std::min(text.size(), static_cast<std::size_t>(lm.context - 1)));
}

std::vector<std::string> fitted_sources(const std::vector<const RtlDocument*>& docs, const LmConfig& lm) {
  std::vector<std::string> out;
  for (const auto* d : docs) out.emplace_back(fit_context(d->source, lm));
  return out;
}

std::vector<int> stage_layers(const PipelineConfig& config) {
  if (!config.layers.empty()) {
    std::set<int> s(config.layers.begin(), config.layers.end());
    return {s.begin(), s.end()};
  }
  std::vector<int> out;
  for (int l = 1; l <= config.lm.layers; ++l) out.push_back(l);
  return out;
}

LanguageModel load_model(const PipelineConfig& config) {
  const Layout layout{config.out};
  require(layout.model(), Stage::train_lm);
  auto model = load_checkpoint(layout.model());
  if (!(model.config().layers == config.lm.layers && model.config().hidden == config.lm.hidden &&
        model.config().heads == config.lm.heads && model.config().context == config.lm.context)) {
    throw ConfigError("checkpoint " + layout.model().generic_string() + " does not match the [lm] section; rerun train-lm");
  }
  return model;
}

std::map<int, SparseAutoencoder> load_saes(const PipelineConfig& config) {
  const Layout layout{config.out};
  std::map<int, SparseAutoencoder> out;
  for (int l : stage_layers(config)) {
    require(layout.sae(l), Stage::sae);
    out[l] = load_sae(layout.sae(l));
  }
  return out;
}

FeatureSelection load_named_selection(const PipelineConfig& config, std::string_view name = {}) {
  const Layout layout{config.out};
  require(layout.selection(name), Stage::identify);
  return load_selection(layout.selection(name));
}

void require_residual_tap(const PipelineConfig& config) {
  if (config.tap != Tap::residual) {
    throw ConfigError("steering edits the residual stream; set activations.tap = residual");
  }
}

/// Activation vectors of one subset grouped by sample (file order) then layer.
struct SampleActivations {
  std::vector<std::string> order;
  std::map<std::string, std::map<int, std::vector<std::vector<float>>>> by_sample;
};

SampleActivations load_subset_activations(const PipelineConfig& config, Subset subset) {
  const Layout layout{config.out};
  const auto path = layout.activations(to_string(subset));
  require(path, Stage::activations);
  int hidden = 0;
  auto records = parse_activations(io::read_file(path), &hidden);
  if (hidden != config.lm.hidden) throw DimensionError("activation width does not match lm.hidden");
  SampleActivations out;
  for (auto& r : records) {
    if (r.tap != config.tap) continue;
    auto [it, inserted] = out.by_sample.try_emplace(r.sample);
    if (inserted) out.order.push_back(r.sample);
    it->second[r.layer].push_back(std::move(r.values));
  }
  return out;
}

std::vector<Probe> make_probes(const std::vector<const RtlDocument*>& docs, double fraction) {
  std::vector<Probe> out;
  for (const auto* d : docs) out.push_back(make_probe(d->id, d->source, fraction));
  return out;
}

std::vector<const RtlDocument*> of_category(const std::vector<const RtlDocument*>& docs, Category c) {
  std::vector<const RtlDocument*> out;
  for (const auto* d : docs) {
    if (d->category == c) out.push_back(d);
  }
  return out;
}

SweepOptions sweep_options(const PipelineConfig& config) {
  SweepOptions o;
  o.k_values = config.k_values;
  o.alphas = config.alphas;
  o.steering = config.steering;
  o.decode = config.decode();
  o.embedding = config.embedding;
  return o;
}

std::string kv(std::string_view key, const std::string& value) { return std::string(key) + "\t" + value + "\n"; }

std::map<std::string, std::string> parse_kv(std::string_view text) {
  std::map<std::string, std::string> out;
  for (auto line : io::lines(text)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw FormatError("malformed key/value line '" + std::string(line) + "'");
    out[std::string(line.substr(0, tab))] = std::string(line.substr(tab + 1));
  }
  return out;
}

// ---------------------------------------------------------------- stages

void stage_synth(const PipelineConfig& config, const Logger& log) {
  const Layout layout{config.out};
  auto docs = synth_corpus(config.corpus_seed, config.synth);
  auto parts = partition(docs, config.partition, config.corpus_seed);
  std::map<std::string, Subset> labels;
  for (const auto* list : {&parts.non_sensitive, &parts.proprietary, &parts.diagnostic}) {
    for (const auto& d : *list) labels[d.id] = d.subset;
  }
  CorpusManifest manifest;
  manifest.seed = config.corpus_seed;
  for (const auto& d : docs) {
    const fs::path rel = fs::path("docs") / (d.id + ".v");
    emit(layout.manifest().parent_path() / rel, d.source);
    auto it = labels.find(d.id);
    manifest.entries.push_back({d.id, rel, d.category, it == labels.end() ? Subset::test : it->second});
  }
  emit(layout.manifest(), format_manifest(manifest));
  say(log, "synth: " + std::to_string(docs.size()) + " documents");
}

void stage_embed(const PipelineConfig& config, const Logger& log) {
  const Layout layout{config.out};
  const auto corpus = load_corpus(config);
  const auto provider = config.semantic_provider();
  ExtractOptions opts;
  opts.identifier_cap = config.identifier_cap;
  CorpusIndex index(config.embedding);
  std::size_t degraded = 0;
  for (const auto& d : corpus.docs) {
    const auto bundle = extract_bundle(d.source, provider, d.id, opts);
    degraded += bundle.parse_failed ? 1 : 0;
    index.add(d.id, build_embedding(bundle, config.embedding));
  }
  emit(layout.index(), format_index(index));
  say(log, "embed: " + std::to_string(index.size()) + " rows, " + std::to_string(degraded) + " parsed in degraded mode");
}

void stage_train_lm(const PipelineConfig& config, const Logger& log) {
  const Layout layout{config.out};
  const auto corpus = load_corpus(config);
  const auto docs = sources(corpus.training());
  if (docs.empty()) throw ConfigError("train-lm: no non_sensitive or proprietary_marked documents");
  LanguageModel model(config.lm);
  TrainOptions opts;
  opts.steps = config.lm_steps;
  opts.learning_rate = config.lm_learning_rate;
  opts.batch = config.lm_batch;
  opts.warmup = config.lm_warmup;
  opts.weight_decay = config.lm_weight_decay;
  opts.seed = config.lm.seed;
  opts.log_every = std::max(1, config.lm_steps / 20);
  std::string train_log = "step\tloss\n";
  opts.on_log = [&](int step, double loss) {
    train_log += std::to_string(step) + "\t" + io::format_double(loss) + "\n";
    say(log, "train-lm: step " + std::to_string(step) + " loss " + fixed(loss, 4));
  };
  const auto report = train_lm(model, docs, opts);
  save_checkpoint(model, layout.model());
  emit(layout.train_log(), train_log);

  // Memorization baseline on the proprietary subset.
  std::string mem = "id\tprompt_bytes\treference_bytes\tregurgitation\n";
  std::size_t memorized = 0;
  const auto prop = corpus.subset(Subset::proprietary_marked);
  for (const auto& p : make_probes(prop, config.prompt_fraction)) {
    const auto cont = generate(model, p.prompt, config.decode());
    const double r = regurgitation_ratio(cont, p.reference);
    memorized += r >= 0.8 ? 1 : 0;
    mem += p.id + "\t" + std::to_string(p.prompt.size()) + "\t" + std::to_string(p.reference.size()) + "\t" +
           io::format_double(r) + "\n";
  }
  emit(layout.memorization(), mem);
  say(log, "train-lm: loss " + fixed(report.initial_loss, 4) + " -> " + fixed(report.final_loss, 4) + ", " +
               std::to_string(memorized) + "/" + std::to_string(prop.size()) + " proprietary modules regurgitated");
}

void stage_activations(const PipelineConfig& config, const Logger& log) {
  const Layout layout{config.out};
  const auto corpus = load_corpus(config);
  const auto model = load_model(config);
  std::vector<TapSpec> taps;
  for (int l : stage_layers(config)) taps.push_back({l, config.tap});
  for (Subset s : {Subset::non_sensitive, Subset::proprietary_marked, Subset::diagnostic}) {
    ActivationWriter writer(config.lm.hidden);
    const auto docs = corpus.subset(s);
    for (const auto* d : docs) writer.add(d->id, capture_activations(model, fit_context(d->source, model.config()), taps));
    emit(layout.activations(to_string(s)), writer.data());
    say(log, "activations: " + std::string(to_string(s)) + " " + std::to_string(docs.size()) + " documents");
  }
}

void stage_sae(const PipelineConfig& config, const Logger& log) {
  const Layout layout{config.out};
  std::map<int, std::vector<std::vector<double>>> data;
  for (Subset s : {Subset::non_sensitive, Subset::proprietary_marked}) {
    const auto acts = load_subset_activations(config, s);
    for (const auto& id : acts.order) {
      for (const auto& [layer, rows] : acts.by_sample.at(id)) {
        for (const auto& h : rows) data[layer].emplace_back(h.begin(), h.end());
      }
    }
  }
  std::string summary = "layer\td\tm\tlambda\trelative_mse\tmean_l0\tfinal_loss\n";
  for (int l : stage_layers(config)) {
    auto it = data.find(l);
    if (it == data.end() || it->second.empty()) {
      throw MissingArtifactError("activations", "no activations captured for layer " + std::to_string(l));
    }
    SaeTrainOptions opts;
    opts.latents = config.sae_latents;
    opts.lambda = config.sae_lambda;
    opts.steps = config.sae_steps;
    opts.learning_rate = config.sae_learning_rate;
    opts.batch = config.sae_batch;
    opts.seed = config.sae_seed + static_cast<std::uint64_t>(l);
    SaeTrainReport report;
    const auto sae = train_sae(it->second, opts, l, &report);
    save_sae(sae, layout.sae(l));
    const double rel = relative_mse(sae, it->second);
    summary += std::to_string(l) + "\t" + std::to_string(sae.input_dim()) + "\t" + std::to_string(sae.latent_dim()) +
               "\t" + io::format_double(sae.lambda()) + "\t" + io::format_double(rel) + "\t" +
               io::format_double(report.mean_l0) + "\t" + io::format_double(report.final.total) + "\n";
    say(log, "sae-train: layer " + std::to_string(l) + " relative mse " + fixed(rel, 4) + ", L0 " +
                 fixed(report.mean_l0, 1));
  }
  emit(layout.sae_summary(), summary);
}

LayerCodes codes_for(const SampleActivations& acts, const std::map<int, SparseAutoencoder>& saes,
                     const std::set<std::string>* keep = nullptr) {
  LayerCodes out;
  for (const auto& id : acts.order) {
    if (keep && !keep->count(id)) continue;
    for (const auto& [layer, rows] : acts.by_sample.at(id)) {
      auto s = saes.find(layer);
      if (s == saes.end()) continue;
      out[layer].push_back(mean_code(s->second, rows));
    }
  }
  return out;
}

void stage_identify(const PipelineConfig& config, const Logger& log) {
  const Layout layout{config.out};
  const auto corpus = load_corpus(config);
  const auto saes = load_saes(config);
  const auto prop = load_subset_activations(config, Subset::proprietary_marked);
  const auto diag = load_subset_activations(config, Subset::diagnostic);
  const auto d_codes = codes_for(diag, saes);

  const auto deltas = compute_deltas(codes_for(prop, saes), d_codes);
  const auto selection = select_features(deltas, config.rule, "proprietary_marked", "diagnostic");
  save_selection(selection, layout.selection());
  std::string table = "layer\tindex\tdelta\n";
  for (const auto& [layer, values] : deltas) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      table += std::to_string(layer) + "\t" + std::to_string(i) + "\t" + io::format_double(values[i]) + "\n";
    }
  }
  emit(layout.deltas(), table);
  say(log, "identify: " + std::to_string(selection.total()) + " latents (" +
               format_percent(selection.total(), selection.total_latents()) + "%)");

  for (Category c : {config.transfer_source, config.transfer_target}) {
    std::set<std::string> ids;
    for (const auto* d : of_category(corpus.subset(Subset::proprietary_marked), c)) ids.insert(d->id);
    if (ids.empty()) throw ConfigError("identify: no proprietary_marked documents of category " + std::string(to_string(c)));
    const auto cat = select_features(compute_deltas(codes_for(prop, saes, &ids), d_codes), config.rule,
                                     "proprietary_marked/" + std::string(to_string(c)), "diagnostic");
    save_selection(cat, layout.selection(to_string(c)));
  }

  if (config.tap == Tap::residual) {
    const auto model = load_model(config);
    const auto cal = calibrate_risk(model, saes, selection, fitted_sources(corpus.subset(Subset::diagnostic), model.config()));
    emit(layout.calibration(), format_calibration(cal));
  }
}

void stage_steer(const PipelineConfig& config, const Logger& log) {
  require_residual_tap(config);
  const Layout layout{config.out};
  const auto corpus = load_corpus(config);
  const auto model = load_model(config);
  const auto saes = load_saes(config);
  const auto selection = load_named_selection(config);
  const auto decode = config.decode();
  const auto probes = make_probes(corpus.subset(Subset::proprietary_marked), config.prompt_fraction);
  if (probes.empty()) throw ConfigError("steer: no proprietary_marked documents");

  std::vector<std::string> prompts;
  for (const auto& p : probes) prompts.push_back(p.prompt);
  const auto norms = delta_norm_stats(model, saes, selection, config.steering, prompts, config.norm_runs, decode);
  std::string nt = "layer\tmean\tstd\tmin\tmax\n";
  for (const auto& [layer, s] : norms) {
    nt += std::to_string(layer) + "\t" + io::format_double(s.mean) + "\t" + io::format_double(s.std) + "\t" +
          io::format_double(s.min) + "\t" + io::format_double(s.max) + "\n";
  }
  emit(layout.delta_norms(), nt);

  const auto hooks = make_steering_hooks(saes, selection, config.steering);
  std::string pt = "id\tbaseline_similarity\tsteered_similarity\tbaseline_regurgitation\tsteered_regurgitation\t"
                   "baseline_quality\tsteered_quality\tsem_diff_pct\n";
  for (const auto& p : probes) {
    const auto base = generate(model, p.prompt, decode);
    const auto steered = generate(model, p.prompt, decode, hooks);
    pt += p.id + "\t" + io::format_double(text_similarity(base, p.reference, config.embedding)) + "\t" +
          io::format_double(text_similarity(steered, p.reference, config.embedding)) + "\t" +
          io::format_double(regurgitation_ratio(base, p.reference)) + "\t" +
          io::format_double(regurgitation_ratio(steered, p.reference)) + "\t" +
          io::format_double(evaluate_quality(p.prompt + base)) + "\t" +
          io::format_double(evaluate_quality(p.prompt + steered)) + "\t" +
          io::format_double(semantic_difference(steered, base, config.embedding)) + "\n";
  }
  emit(layout.steer_probes(), pt);

  const auto held_out = sources(corpus.subset(Subset::diagnostic));
  if (!held_out.empty()) {
    const double base = perplexity(model, held_out);
    const double steered = perplexity(model, held_out, hooks);
    emit(layout.steer_perplexity(), kv("baseline", io::format_double(base)) + kv("steered", io::format_double(steered)) +
                                        kv("increase", io::format_double(steered / base - 1.0)));
  }

  if (config.adaptive) {
    require(layout.calibration(), Stage::identify);
    const auto cal = parse_calibration(io::read_file(layout.calibration()));
    std::string at = "id\trisk\tstrength\tquality\tsteps\n";
    for (std::size_t i = 0; i < std::min(config.adaptive_probes, probes.size()); ++i) {
      const auto r = adaptive_generate(model, saes, selection, config.steering, cal, probes[i].prompt, decode,
                                       config.adaptive_s0, config.adaptive_steps, config.adaptive_s_min,
                                       config.adaptive_s_max);
      at += probes[i].id + "\t" + io::format_double(r.risk) + "\t" + io::format_double(r.strength) + "\t" +
            io::format_double(r.quality) + "\t" + std::to_string(r.steps.size()) + "\n";
    }
    emit(layout.adaptive(), at);
  }
  say(log, "steer: " + std::to_string(probes.size()) + " probes at alpha " + fixed(config.steering.alpha));
}

void stage_sweep(const PipelineConfig& config, const Logger& log) {
  require_residual_tap(config);
  const Layout layout{config.out};
  const auto corpus = load_corpus(config);
  const auto model = load_model(config);
  const auto saes = load_saes(config);
  const auto selection = load_named_selection(config);
  const auto opts = sweep_options(config);
  const auto prop = corpus.subset(Subset::proprietary_marked);
  const auto probes = make_probes(prop, config.prompt_fraction);
  if (probes.empty()) throw ConfigError("sweep: no proprietary_marked documents");

  const auto baseline = sweep_baseline(model, probes, opts);
  const auto records = sweep(model, saes, selection, probes, opts, baseline);
  emit(layout.sweep_csv(), format_sweep_csv(records));
  say(log, "sweep: " + std::to_string(records.size()) + " cells, baseline similarity " + fixed(baseline.similarity, 4));

  std::set<Category> cats;
  for (const auto* d : prop) cats.insert(d->category);
  for (Category c : cats) {
    const auto cp = make_probes(of_category(prop, c), config.prompt_fraction);
    const auto cb = sweep_baseline(model, cp, opts);
    emit(layout.sweep_csv(to_string(c)), format_sweep_csv(sweep(model, saes, selection, cp, opts, cb)));
  }

  // Operating point: lowest similarity to the memorized references subject
  // to the quality floor and the held-out perplexity budget.
  const auto held_out = sources(corpus.subset(Subset::diagnostic));
  if (held_out.empty()) throw ConfigError("sweep: no diagnostic documents for held-out perplexity");
  const double ppl_base = perplexity(model, held_out);
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].similarity < records[b].similarity; });
  std::optional<std::size_t> chosen;
  double ppl_chosen = ppl_base;
  for (std::size_t i : order) {
    const auto& r = records[i];
    if (r.quality < config.min_quality) continue;
    SteeringConfig sc = config.steering;
    sc.k = r.k;
    sc.alpha = r.alpha;
    const double ppl = perplexity(model, held_out, make_steering_hooks(saes, selection, sc));
    if (ppl / ppl_base - 1.0 <= config.max_perplexity_increase) {
      chosen = i;
      ppl_chosen = ppl;
      break;
    }
  }
  std::string op = kv("feasible", chosen ? "true" : "false") +
                   kv("baseline_similarity", io::format_double(baseline.similarity)) +
                   kv("baseline_quality", io::format_double(baseline.quality)) +
                   kv("baseline_regurgitation", io::format_double(baseline.regurgitation)) +
                   kv("baseline_perplexity", io::format_double(ppl_base));
  if (chosen) {
    const auto& r = records[*chosen];
    op += kv("k", std::to_string(r.k)) + kv("alpha", io::format_double(r.alpha)) +
          kv("similarity", io::format_double(r.similarity)) +
          kv("similarity_reduction", io::format_double(1.0 - r.similarity / baseline.similarity)) +
          kv("quality", io::format_double(r.quality)) + kv("regurgitation", io::format_double(r.regurgitation)) +
          kv("sem_diff_pct", io::format_double(r.sem_diff)) + kv("perplexity", io::format_double(ppl_chosen)) +
          kv("perplexity_increase", io::format_double(ppl_chosen / ppl_base - 1.0));
    say(log, "sweep: operating point K=" + std::to_string(r.k) + " alpha=" + fixed(r.alpha) + ", similarity " +
                 fixed(baseline.similarity, 3) + " -> " + fixed(r.similarity, 3));
  } else {
    say(log, "sweep: no grid cell satisfies the quality and perplexity constraints");
  }
  emit(layout.operating_point(), op);
}

void stage_transfer(const PipelineConfig& config, const Logger& log) {
  require_residual_tap(config);
  const Layout layout{config.out};
  const auto corpus = load_corpus(config);
  const auto model = load_model(config);
  const auto saes = load_saes(config);
  const auto sel_a = load_named_selection(config, to_string(config.transfer_source));
  const auto sel_b = load_named_selection(config, to_string(config.transfer_target));
  const auto opts = sweep_options(config);
  const auto probes_b =
      make_probes(of_category(corpus.subset(Subset::proprietary_marked), config.transfer_target), config.prompt_fraction);
  const auto baseline_b = sweep_baseline(model, probes_b, opts);
  std::string out = "K,alpha,transferred,selection_size,total_latents,rate_pct,overlap_pct,sem_diff_a,sem_diff_b,"
                    "effectiveness_pct\n";
  for (std::size_t k : config.transfer_k) {
    const auto t = transfer_eval(model, saes, sel_a, sel_b, probes_b, k, config.transfer_alpha, opts, baseline_b);
    out += std::to_string(k) + "," + io::format_double(t.alpha) + "," + std::to_string(t.transferred) + "," +
           std::to_string(t.selection_size) + "," + std::to_string(t.total_latents) + "," +
           io::format_double(t.transfer_rate()) + "," + io::format_double(t.overlap_rate()) + "," +
           io::format_double(t.sem_diff_a) + "," + io::format_double(t.sem_diff_b) + "," +
           (t.effectiveness ? io::format_double(*t.effectiveness) : std::string("nan")) + "\n";
    say(log, "transfer: K=" + std::to_string(k) + " transferred " + std::to_string(t.transferred) + ", effectiveness " +
                 (t.effectiveness ? fixed(*t.effectiveness, 1) + "%" : std::string("undefined")));
  }
  emit(layout.transfer(), out);
}

std::string cell(const std::optional<SteeringPoint>& p, int which) {
  if (!p) return "-";
  switch (which) {
    case 0: return fixed(p->alpha, 2);
    case 1: return fixed(p->sem_diff, 1);
    default: return fixed(p->quality, 2);
  }
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  const auto text = io::read_file(path);
  for (auto line : io::lines(text)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    for (auto f : io::split(line, ',')) row.emplace_back(f);
    rows.push_back(std::move(row));
  }
  return rows;
}

void stage_report(const PipelineConfig& config, const Logger& log) {
  const Layout layout{config.out};
  const auto corpus = load_corpus(config);
  for (const auto& [path, stage] : std::vector<std::pair<fs::path, Stage>>{
           {layout.index(), Stage::embed},
           {layout.memorization(), Stage::train_lm},
           {layout.sae_summary(), Stage::sae},
           {layout.selection(), Stage::identify},
           {layout.delta_norms(), Stage::steer},
           {layout.steer_perplexity(), Stage::steer},
           {layout.sweep_csv(), Stage::sweep},
           {layout.operating_point(), Stage::sweep},
           {layout.transfer(), Stage::transfer}}) {
    require(path, stage);
  }
  std::string r = "# Memorization defense report\n\n";

  const auto counts = corpus.manifest.subset_counts();
  r += "## Corpus\n\n| Subset | Documents |\n|---|---:|\n";
  for (Subset s : {Subset::non_sensitive, Subset::proprietary_marked, Subset::diagnostic, Subset::test}) {
    r += "| " + std::string(to_string(s)) + " | " + std::to_string(counts[static_cast<std::size_t>(s)]) + " |\n";
  }

  const auto mem_text = io::read_file(layout.memorization());
  const auto mem = io::lines(mem_text);
  std::size_t memorized = 0, probes = 0;
  for (std::size_t i = 1; i < mem.size(); ++i) {
    if (mem[i].empty()) continue;
    ++probes;
    memorized += io::parse_double(io::split(mem[i], '\t').back()) >= 0.8 ? 1 : 0;
  }
  r += "\nRegurgitation baseline: " + std::to_string(memorized) + "/" + std::to_string(probes) +
       " proprietary modules reproduce >= 80% of their remaining bytes from a " +
       fixed(100 * config.prompt_fraction, 0) + "% prompt.\n";

  r += "\n## SAE\n\n| Layer | d | m | lambda | Rel. MSE | L0 |\n|---:|---:|---:|---:|---:|---:|\n";
  const auto sae_rows_text = io::read_file(layout.sae_summary());
  const auto sae_rows = io::lines(sae_rows_text);
  for (std::size_t i = 1; i < sae_rows.size(); ++i) {
    if (sae_rows[i].empty()) continue;
    const auto f = io::split(sae_rows[i], '\t');
    r += "| " + std::string(f[0]) + " | " + std::string(f[1]) + " | " + std::string(f[2]) + " | " + std::string(f[3]) +
         " | " + fixed(io::parse_double(f[4]), 4) + " | " + fixed(io::parse_double(f[5]), 1) + " |\n";
  }

  const auto selection = load_selection(layout.selection());
  r += "\n## Selected latents (" + selection.rule.describe() + ")\n\n";
  r += format_layer_table(layer_counts(selection));

  r += "\n## Edit norms\n\n| Layer | Mean | Std. Deviat. | Min | Max |\n|---:|---:|---:|---:|---:|\n";
  const auto norm_rows_text = io::read_file(layout.delta_norms());
  const auto norm_rows = io::lines(norm_rows_text);
  for (std::size_t i = 1; i < norm_rows.size(); ++i) {
    if (norm_rows[i].empty()) continue;
    const auto f = io::split(norm_rows[i], '\t');
    r += "| " + std::string(f[0]);
    for (std::size_t j = 1; j < f.size(); ++j) r += " | " + fixed(io::parse_double(f[j]), 4);
    r += " |\n";
  }
  const auto ppl = parse_kv(io::read_file(layout.steer_perplexity()));
  r += "\nHeld-out perplexity at alpha " + fixed(config.steering.alpha) + ": " + fixed(io::parse_double(ppl.at("baseline")), 3) +
       " -> " + fixed(io::parse_double(ppl.at("steered")), 3) + "\n";

  r += "\n## Sweep\n\nPer-cell results: `" + fs::relative(layout.sweep_csv(), layout.root).generic_string() + "`";
  std::set<Category> cats;
  for (const auto* d : corpus.subset(Subset::proprietary_marked)) cats.insert(d->category);
  for (Category c : cats) r += ", `" + fs::relative(layout.sweep_csv(to_string(c)), layout.root).generic_string() + "`";
  r += "\n\n| Category | K | Knee α | Knee semΔ (%) | Knee quality | Oversteer α | Oversteer semΔ (%) | Oversteer quality |\n";
  r += "|---|---:|---:|---:|---:|---:|---:|---:|\n";
  for (Category c : cats) {
    require(layout.sweep_csv(to_string(c)), Stage::sweep);
    const auto recs = parse_sweep_csv(io::read_file(layout.sweep_csv(to_string(c))));
    std::map<std::size_t, std::vector<SteeringPoint>> by_k;
    for (const auto& rec : recs) by_k[rec.k].push_back({rec.alpha, rec.sem_diff, rec.quality});
    for (auto& [k, pts] : by_k) {
      std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.alpha < b.alpha; });
      const auto ko = detect_knee_oversteer(pts);
      r += "| " + std::string(to_string(c)) + " | " + std::to_string(k);
      for (int w = 0; w < 3; ++w) r += " | " + cell(ko.knee, w);
      for (int w = 0; w < 3; ++w) r += " | " + cell(ko.oversteer, w);
      r += " |\n";
    }
  }

  const auto op = parse_kv(io::read_file(layout.operating_point()));
  r += "\n### Operating point\n\n";
  if (op.at("feasible") == "true") {
    r += "K = " + op.at("k") + ", α = " + fixed(io::parse_double(op.at("alpha"))) + "\n\n";
    r += "| Metric | Unsteered | Steered |\n|---|---:|---:|\n";
    r += "| Similarity to reference | " + fixed(io::parse_double(op.at("baseline_similarity")), 4) + " | " +
         fixed(io::parse_double(op.at("similarity")), 4) + " |\n";
    r += "| Quality | " + fixed(io::parse_double(op.at("baseline_quality"))) + " | " +
         fixed(io::parse_double(op.at("quality"))) + " |\n";
    r += "| Regurgitation | " + fixed(io::parse_double(op.at("baseline_regurgitation")), 3) + " | " +
         fixed(io::parse_double(op.at("regurgitation")), 3) + " |\n";
    r += "| Held-out perplexity | " + fixed(io::parse_double(op.at("baseline_perplexity")), 3) + " | " +
         fixed(io::parse_double(op.at("perplexity")), 3) + " |\n";
    r += "\nSimilarity reduction: " + fixed(100 * io::parse_double(op.at("similarity_reduction")), 1) + "%\n";
  } else {
    r += "No grid cell meets quality >= " + fixed(config.min_quality) + " with held-out perplexity increase <= " +
         fixed(100 * config.max_perplexity_increase, 0) + "%.\n";
  }

  r += "\n## Transfer (" + std::string(to_string(config.transfer_source)) + " -> " +
       std::string(to_string(config.transfer_target)) + ", α = " + fixed(config.transfer_alpha) + ")\n\n";
  r += "| K | Transferred | Rate (%) | Overlap (%) | Effectiveness (%) |\n|---:|---:|---:|---:|---:|\n";
  const auto rows = read_csv(layout.transfer());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    const auto transferred = static_cast<std::size_t>(io::parse_int(f[2]));
    const auto total = static_cast<std::size_t>(io::parse_int(f[4]));
    r += "| " + f[0] + " | " + f[2] + " | " + format_percent(transferred, total) + " | " +
         fixed(io::parse_double(f[6]), 1) + " | " + (f[9] == "nan" ? std::string("-") : fixed(io::parse_double(f[9]), 1)) +
         " |\n";
  }

  if (fs::exists(layout.adaptive())) {
    r += "\n## Adaptive steering\n\n| Probe | Risk | Strength | Quality | Steps |\n|---|---:|---:|---:|---:|\n";
    const auto ad_text = io::read_file(layout.adaptive());
    const auto ad = io::lines(ad_text);
    for (std::size_t i = 1; i < ad.size(); ++i) {
      if (ad[i].empty()) continue;
      const auto f = io::split(ad[i], '\t');
      r += "| " + std::string(f[0]) + " | " + fixed(io::parse_double(f[1]), 3) + " | " +
           fixed(io::parse_double(f[2]), 3) + " | " + fixed(io::parse_double(f[3])) + " | " + std::string(f[4]) + " |\n";
    }
  }
  emit(layout.report(), r);
  say(log, "report: " + layout.report().generic_string());
}

}  // namespace

std::string_view to_string(Stage stage) { return kStageNames[static_cast<std::size_t>(stage)]; }

Stage parse_stage(std::string_view text) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (kStageNames[i] == text) return static_cast<Stage>(i);
  }
  throw ConfigError("unknown stage '" + std::string(text) + "'");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages{Stage::synth,    Stage::embed, Stage::train_lm, Stage::activations,
                                         Stage::sae,      Stage::identify, Stage::steer, Stage::sweep,
                                         Stage::transfer, Stage::report};
  return stages;
}

fs::path Layout::activations(std::string_view subset) const {
  return root / "activations" / (std::string(subset) + ".cgact");
}

fs::path Layout::sae(int layer) const { return root / "sae" / ("layer" + std::to_string(layer) + ".cgsae"); }

fs::path Layout::selection(std::string_view name) const {
  return root / "identify" / (name.empty() ? std::string("selection.cgsel") : "selection_" + std::string(name) + ".cgsel");
}

fs::path Layout::sweep_csv(std::string_view category) const {
  return root / "sweep" / (category.empty() ? std::string("sweep.csv") : "sweep_" + std::string(category) + ".csv");
}

void run_stage(Stage stage, const PipelineConfig& config, const Logger& log) {
  config.validate();
  switch (stage) {
    case Stage::synth:
      if (!config.manifest.empty()) {
        say(log, "synth: skipped, corpus.manifest is set");
        return;
      }
      return stage_synth(config, log);
    case Stage::embed: return stage_embed(config, log);
    case Stage::train_lm: return stage_train_lm(config, log);
    case Stage::activations: return stage_activations(config, log);
    case Stage::sae: return stage_sae(config, log);
    case Stage::identify: return stage_identify(config, log);
    case Stage::steer: return stage_steer(config, log);
    case Stage::sweep: return stage_sweep(config, log);
    case Stage::transfer: return stage_transfer(config, log);
    case Stage::report: return stage_report(config, log);
  }
}

void run_pipeline(const PipelineConfig& config, const std::vector<Stage>& stages, const Logger& log) {
  for (Stage s : stages) run_stage(s, config, log);
}

std::vector<SearchHit> run_query(const PipelineConfig& config, std::string_view source, std::size_t k) {
  const Layout layout{config.out};
  require(layout.index(), Stage::embed);
  const auto index = load_index(layout.index());
  if (!(index.config() == config.embedding)) throw ConfigError("query: index was built with a different [embedding]");
  ExtractOptions opts;
  opts.identifier_cap = config.identifier_cap;
  const auto provider = SemanticProvider::hashed_ngram(config.embedding.dim(Family::semantic));
  auto query = build_embedding(extract_bundle(source, provider, {}, opts), config.embedding);
  if (!config.semantic_vectors.empty()) {
    // no precomputed vector exists for ad-hoc text; match on the other families only
    for (const auto& seg : query.layout) {
      if (seg.family == Family::semantic) std::fill_n(query.values.begin() + seg.offset, seg.length, 0.0);
    }
  }
  return query_topk(index, query, k);
}

}  // namespace rtlguard
