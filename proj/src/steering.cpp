#include "rtlguard/steering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "rtlguard/features.hpp"
#include "rtlguard/io.hpp"
#include "rtlguard/quality.hpp"

namespace rtlguard {

namespace {

constexpr std::string_view kSelMagic = "CGSEL1";

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<double> layer_mean(const std::vector<std::vector<double>>& codes, int layer, const char* which) {
  if (codes.empty()) {
    throw ConfigError(std::string("compute_deltas: empty ") + which + " probe set at layer " + std::to_string(layer));
  }
  std::vector<double> mean(codes.front().size(), 0.0);
  for (const auto& z : codes) {
    if (z.size() != mean.size()) throw DimensionError("compute_deltas: ragged latent codes");
    for (std::size_t i = 0; i < z.size(); ++i) mean[i] += z[i];
  }
  for (double& v : mean) v /= static_cast<double>(codes.size());
  return mean;
}

std::vector<double> to_double(std::span<const float> h) { return {h.begin(), h.end()}; }

EmbeddingVector embed_text(std::string_view text, const EmbeddingConfig& config) {
  const auto provider = SemanticProvider::hashed_ngram(config.dim(Family::semantic));
  return build_embedding(extract_bundle(text, provider), config);
}

std::vector<int> steered_layers(const FeatureSelection& selection, const SteeringConfig& config) {
  std::vector<int> out;
  for (const auto& [layer, list] : selection.layers) {
    if (list.empty()) continue;
    if (!config.layers.empty() &&
        std::find(config.layers.begin(), config.layers.end(), layer) == config.layers.end()) {
      continue;
    }
    out.push_back(layer);
  }
  return out;
}

struct NormAccumulator {
  std::map<int, double> sum;
  std::map<int, std::size_t> count;

  DeltaObserver observer() {
    return [this](int layer, double norm) {
      sum[layer] += norm;
      ++count[layer];
    };
  }

  std::map<int, double> means() const {
    std::map<int, double> out;
    for (const auto& [layer, s] : sum) out[layer] = s / static_cast<double>(count.at(layer));
    return out;
  }
};

}  // namespace

LayerDeltas compute_deltas(const LayerCodes& proprietary, const LayerCodes& diagnostic) {
  if (proprietary.empty() || diagnostic.empty()) throw ConfigError("compute_deltas: empty probe set");
  LayerDeltas out;
  for (const auto& [layer, p_codes] : proprietary) {
    auto it = diagnostic.find(layer);
    if (it == diagnostic.end()) {
      throw ConfigError("compute_deltas: layer " + std::to_string(layer) + " missing from diagnostic codes");
    }
    const auto mp = layer_mean(p_codes, layer, "proprietary");
    const auto md = layer_mean(it->second, layer, "diagnostic");
    if (mp.size() != md.size()) {
      throw DimensionError("compute_deltas: latent width differs between sets at layer " + std::to_string(layer));
    }
    std::vector<double> delta(mp.size());
    for (std::size_t i = 0; i < mp.size(); ++i) delta[i] = std::fabs(mp[i] - md[i]);
    out[layer] = std::move(delta);
  }
  if (out.size() != diagnostic.size()) throw ConfigError("compute_deltas: layer sets differ");
  return out;
}

std::vector<double> mean_code(const SparseAutoencoder& sae, const std::vector<std::vector<float>>& positions) {
  if (positions.empty()) throw ConfigError("mean_code: no positions");
  std::vector<double> mean(sae.latent_dim(), 0.0);
  for (const auto& h : positions) {
    const auto z = sae.encode(std::span<const float>(h));
    for (std::size_t i = 0; i < z.size(); ++i) mean[i] += z[i];
  }
  for (double& v : mean) v /= static_cast<double>(positions.size());
  return mean;
}

SelectionRule SelectionRule::threshold(double tau) {
  if (!(tau >= 0.0)) throw ConfigError("selection threshold must be >= 0");
  SelectionRule r;
  r.kind = Kind::threshold;
  r.tau = tau;
  return r;
}

SelectionRule SelectionRule::top_k(std::size_t k) {
  SelectionRule r;
  r.kind = Kind::top_k;
  r.k = k;
  return r;
}

std::string SelectionRule::describe() const {
  return kind == Kind::threshold ? "threshold:" + io::format_double(tau) : "top_k:" + std::to_string(k);
}

SelectionRule SelectionRule::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ConfigError("selection rule must be threshold:<tau> or top_k:<k>");
  const auto kind = text.substr(0, colon);
  const auto value = text.substr(colon + 1);
  try {
    if (kind == "threshold") return threshold(io::parse_double(value));
    if (kind == "top_k") {
      const auto k = io::parse_int(value);
      if (k < 0) throw ConfigError("top_k must be >= 0");
      return top_k(static_cast<std::size_t>(k));
    }
  } catch (const FormatError& e) {
    throw ConfigError(std::string("selection rule: ") + e.what());
  }
  throw ConfigError("unknown selection rule '" + std::string(kind) + "'");
}

std::size_t FeatureSelection::total() const {
  std::size_t n = 0;
  for (const auto& [layer, list] : layers) n += list.size();
  return n;
}

std::size_t FeatureSelection::total_latents() const {
  std::size_t n = 0;
  for (const auto& [layer, m] : latents) n += m;
  return n;
}

FeatureSelection FeatureSelection::top(std::size_t k) const {
  FeatureSelection out = *this;
  for (auto& [layer, list] : out.layers) {
    if (list.size() > k) list.resize(k);
  }
  if (out.rule.kind == SelectionRule::Kind::top_k) out.rule.k = std::min(out.rule.k, k);
  return out;
}

FeatureSelection select_features(const LayerDeltas& deltas, const SelectionRule& rule, std::string proprietary_set,
                                 std::string diagnostic_set) {
  FeatureSelection sel;
  sel.rule = rule;
  sel.proprietary_set = std::move(proprietary_set);
  sel.diagnostic_set = std::move(diagnostic_set);
  for (const auto& [layer, delta] : deltas) {
    sel.latents[layer] = delta.size();
    std::vector<std::size_t> order(delta.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return delta[a] > delta[b]; });
    auto& list = sel.layers[layer];
    for (std::size_t idx : order) {
      if (rule.kind == SelectionRule::Kind::threshold) {
        if (delta[idx] < rule.tau) break;
      } else if (list.size() >= rule.k) {
        break;
      }
      list.push_back({idx, delta[idx]});
    }
  }
  return sel;
}

std::string format_selection(const FeatureSelection& s) {
  std::string out(kSelMagic);
  out += "\nrule " + s.rule.describe() + "\n";
  out += "proprietary " + s.proprietary_set + "\n";
  out += "diagnostic " + s.diagnostic_set + "\n";
  out += "layers " + std::to_string(s.latents.size()) + "\n";
  for (const auto& [layer, m] : s.latents) out += "latents " + std::to_string(layer) + " " + std::to_string(m) + "\n";
  out += "features " + std::to_string(s.total()) + "\n";
  for (const auto& [layer, list] : s.layers) {
    for (const auto& f : list) {
      out += std::to_string(layer) + "\t" + std::to_string(f.index) + "\t" + io::format_double(f.delta) + "\n";
    }
  }
  return out;
}

FeatureSelection parse_selection(std::string_view data) {
  io::Reader r(data);
  if (r.line() != kSelMagic) throw FormatError("not a CGSEL1 selection file");
  auto value = [&](std::string_view key) {
    const auto line = r.line();
    const auto sp = line.find(' ');
    if (sp == std::string_view::npos || line.substr(0, sp) != key) {
      throw FormatError("expected '" + std::string(key) + " ...', got '" + std::string(line) + "'");
    }
    return line.substr(sp + 1);
  };
  FeatureSelection s;
  try {
    s.rule = SelectionRule::parse(value("rule"));
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  s.proprietary_set = std::string(value("proprietary"));
  s.diagnostic_set = std::string(value("diagnostic"));
  const auto n_layers = io::parse_int(value("layers"));
  for (long long i = 0; i < n_layers; ++i) {
    auto parts = io::split(value("latents"), ' ');
    if (parts.size() != 2) throw FormatError("malformed latents line");
    const int layer = static_cast<int>(io::parse_int(parts[0]));
    s.latents[layer] = static_cast<std::size_t>(io::parse_int(parts[1]));
    s.layers[layer];
  }
  const auto n = io::parse_int(value("features"));
  for (long long i = 0; i < n; ++i) {
    auto f = io::split(r.line(), '\t');
    if (f.size() != 3) throw FormatError("malformed selection row");
    const int layer = static_cast<int>(io::parse_int(f[0]));
    auto it = s.layers.find(layer);
    if (it == s.layers.end()) throw FormatError("selection row for undeclared layer " + std::to_string(layer));
    const auto index = static_cast<std::size_t>(io::parse_int(f[1]));
    if (index >= s.latents[layer]) throw FormatError("selection index out of range");
    it->second.push_back({index, io::parse_double(f[2])});
  }
  if (!r.done()) throw FormatError("trailing data in selection file");
  return s;
}

void save_selection(const FeatureSelection& selection, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_selection(selection));
}

FeatureSelection load_selection(const std::filesystem::path& path) { return parse_selection(io::read_file(path)); }

std::string format_percent(std::size_t part, std::size_t whole) {
  if (whole == 0) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * static_cast<double>(part) / static_cast<double>(whole));
  return buf;
}

std::vector<LayerCount> layer_counts(const FeatureSelection& selection) {
  std::vector<LayerCount> rows;
  for (const auto& [layer, m] : selection.latents) {
    auto it = selection.layers.find(layer);
    rows.push_back({layer, it == selection.layers.end() ? 0 : it->second.size(), m});
  }
  return rows;
}

std::string format_layer_table(const std::vector<LayerCount>& rows) {
  std::string out = "| Layer | Feat. | % |\n|---:|---:|---:|\n";
  std::size_t total = 0, latents = 0;
  for (const auto& r : rows) {
    out += "| " + std::to_string(r.layer) + " | " + std::to_string(r.count) + " | " + format_percent(r.count, r.latents) +
           " |\n";
    total += r.count;
    latents += r.latents;
  }
  out += "\nTotal: " + std::to_string(total) + " (" + format_percent(total, latents) + "%)\n";
  return out;
}

std::string_view to_string(EditMode mode) {
  return mode == EditMode::full_decode ? "full_decode" : "decode_difference";
}

std::string_view to_string(Weighting w) { return w == Weighting::uniform ? "uniform" : "score_proportional"; }

EditMode parse_edit_mode(std::string_view text) {
  if (text == "full_decode") return EditMode::full_decode;
  if (text == "decode_difference") return EditMode::decode_difference;
  throw ConfigError("unknown edit mode '" + std::string(text) + "'");
}

Weighting parse_weighting(std::string_view text) {
  if (text == "uniform") return Weighting::uniform;
  if (text == "score_proportional") return Weighting::score_proportional;
  throw ConfigError("unknown weighting '" + std::string(text) + "'");
}

void SteeringConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("steering alpha must be >= 0");
  if (!(alpha <= alpha_max)) {
    throw ConfigError("steering alpha " + io::format_double(alpha) + " exceeds alpha_max " + io::format_double(alpha_max));
  }
}

std::vector<double> suppress_latent(std::span<const double> z, const std::vector<LatentScore>& selected, double alpha,
                                    Weighting weighting) {
  if (!(alpha >= 0.0)) throw ConfigError("suppress_latent: alpha must be >= 0");
  std::vector<double> out(z.begin(), z.end());
  double max_delta = 0;
  for (const auto& f : selected) max_delta = std::max(max_delta, f.delta);
  for (const auto& f : selected) {
    if (f.index >= z.size()) throw DimensionError("suppress_latent: latent index out of range");
    double a = alpha;
    if (weighting == Weighting::score_proportional && max_delta > 0) a = alpha * f.delta / max_delta;
    out[f.index] = (1.0 - a) * z[f.index];
  }
  return out;
}

std::vector<double> edit_activation(std::span<const double> h, const SparseAutoencoder& sae,
                                    const std::vector<LatentScore>& selected, double alpha, EditMode mode,
                                    Weighting weighting) {
  const auto z = sae.encode(h);
  const auto zs = suppress_latent(z, selected, alpha, weighting);
  if (mode == EditMode::full_decode) return sae.decode(zs);
  // h + g(z') - g(z): the decoder bias cancels and only selected columns move.
  std::vector<double> out(h.begin(), h.end());
  for (const auto& f : selected) {
    const double diff = zs[f.index] - z[f.index];
    if (diff == 0.0) continue;
    const auto col = sae.column(f.index);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += diff * col[i];
  }
  return out;
}

std::vector<EditHook> make_steering_hooks(const std::map<int, SparseAutoencoder>& saes,
                                          const FeatureSelection& selection, const SteeringConfig& config,
                                          DeltaObserver observer) {
  config.validate();
  const FeatureSelection sel = config.k > 0 ? selection.top(config.k) : selection;
  EditHook hook;
  auto plan = std::make_shared<std::map<int, std::pair<const SparseAutoencoder*, std::vector<LatentScore>>>>();
  for (int layer : steered_layers(sel, config)) {
    auto it = saes.find(layer);
    if (it == saes.end()) throw MissingArtifactError("sae", "no SAE for steered layer " + std::to_string(layer));
    (*plan)[layer] = {&it->second, sel.layers.at(layer)};
    hook.layers.push_back(layer);
  }
  if (hook.layers.empty()) return {};
  hook.edit = [plan, config, observer](int layer, std::span<const float> h) {
    const auto& [sae, list] = plan->at(layer);
    const auto hd = to_double(h);
    const auto edited = edit_activation(hd, *sae, list, config.alpha, config.mode, config.weighting);
    if (observer) {
      double n2 = 0;
      for (std::size_t i = 0; i < hd.size(); ++i) n2 += (edited[i] - hd[i]) * (edited[i] - hd[i]);
      observer(layer, std::sqrt(n2));
    }
    return std::vector<float>(edited.begin(), edited.end());
  };
  return {std::move(hook)};
}

std::map<int, NormStats> delta_norm_stats(const LanguageModel& model, const std::map<int, SparseAutoencoder>& saes,
                                          const FeatureSelection& selection, const SteeringConfig& config,
                                          const std::vector<std::string>& prompts, int runs,
                                          const DecodeConfig& decode) {
  if (prompts.empty() || runs < 1) throw ConfigError("delta_norm_stats: need >= 1 prompt and >= 1 run");
  std::map<int, std::vector<double>> per_run;
  for (int r = 0; r < runs; ++r) {
    NormAccumulator acc;
    const auto hooks = make_steering_hooks(saes, selection, config, acc.observer());
    for (const auto& p : prompts) generate(model, p, decode, hooks);
    for (const auto& [layer, m] : acc.means()) per_run[layer].push_back(m);
  }
  std::map<int, NormStats> out;
  for (const auto& [layer, values] : per_run) {
    NormStats s;
    s.mean = mean_of(values);
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    if (values.size() > 1) {
      // shifted by the first value so identical runs give exactly 0
      const double shift = values.front();
      double sum = 0, sq = 0;
      for (double v : values) {
        sum += v - shift;
        sq += (v - shift) * (v - shift);
      }
      const double n = static_cast<double>(values.size());
      s.std = std::sqrt(std::max(0.0, (sq - sum * sum / n) / (n - 1)));
    }
    out[layer] = s;
  }
  return out;
}

bool RiskCalibration::operator==(const RiskCalibration& o) const {
  if (stats.size() != o.stats.size()) return false;
  for (const auto& [layer, m] : stats) {
    auto it = o.stats.find(layer);
    if (it == o.stats.end() || it->second.size() != m.size()) return false;
    for (const auto& [idx, s] : m) {
      auto jt = it->second.find(idx);
      if (jt == it->second.end() || jt->second.mean != s.mean || jt->second.std != s.std) return false;
    }
  }
  return true;
}

RiskCalibration calibrate_risk(const LanguageModel& model, const std::map<int, SparseAutoencoder>& saes,
                               const FeatureSelection& selection, const std::vector<std::string>& diagnostic) {
  if (diagnostic.empty()) throw ConfigError("calibrate_risk: no diagnostic texts");
  std::vector<TapSpec> taps;
  for (const auto& [layer, list] : selection.layers) {
    if (!list.empty()) taps.push_back({layer, Tap::residual});
  }
  std::map<int, std::map<std::size_t, std::pair<double, double>>> sums;  // sum, sum of squares
  std::size_t positions = 0;
  for (const auto& text : diagnostic) {
    const auto acts = capture_activations(model, text, taps);
    for (const auto& t : taps) {
      const auto& sae = saes.at(t.layer);
      const auto& rows = acts.at(t.layer, Tap::residual);
      for (const auto& h : rows) {
        const auto z = sae.encode(std::span<const float>(h));
        for (const auto& f : selection.layers.at(t.layer)) {
          auto& [s, s2] = sums[t.layer][f.index];
          s += z[f.index];
          s2 += z[f.index] * z[f.index];
        }
      }
      if (t.layer == taps.front().layer) positions += rows.size();
    }
  }
  RiskCalibration cal;
  const double n = static_cast<double>(positions);
  for (const auto& [layer, m] : sums) {
    for (const auto& [idx, s] : m) {
      const double mean = s.first / n;
      const double var = std::max(0.0, s.second / n - mean * mean);
      cal.stats[layer][idx] = {mean, std::sqrt(var)};
    }
  }
  return cal;
}

std::string format_calibration(const RiskCalibration& c) {
  std::string out = "layer\tindex\tmean\tstd\n";
  for (const auto& [layer, m] : c.stats) {
    for (const auto& [idx, s] : m) {
      out += std::to_string(layer) + "\t" + std::to_string(idx) + "\t" + io::format_double(s.mean) + "\t" +
             io::format_double(s.std) + "\n";
    }
  }
  return out;
}

RiskCalibration parse_calibration(std::string_view data) {
  const auto lines = io::lines(data);
  if (lines.empty() || lines.front() != "layer\tindex\tmean\tstd") throw FormatError("not a risk calibration table");
  RiskCalibration c;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = io::split(lines[i], '\t');
    if (f.size() != 4) throw FormatError("malformed calibration row");
    c.stats[static_cast<int>(io::parse_int(f[0]))][static_cast<std::size_t>(io::parse_int(f[1]))] = {
        io::parse_double(f[2]), io::parse_double(f[3])};
  }
  return c;
}

double compute_risk(const LanguageModel& model, std::string_view prompt, const FeatureSelection& selection,
                    const std::map<int, SparseAutoencoder>& saes, const RiskCalibration& calibration) {
  if (calibration.stats.empty()) throw ConfigError("compute_risk: missing calibration");
  std::vector<TapSpec> taps;
  for (const auto& [layer, list] : selection.layers) {
    if (!list.empty()) taps.push_back({layer, Tap::residual});
  }
  if (taps.empty()) return 0.5;
  const auto acts = capture_activations(model, prompt, taps);
  double sum = 0;
  std::size_t n = 0;
  for (const auto& t : taps) {
    auto cal = calibration.stats.find(t.layer);
    if (cal == calibration.stats.end()) {
      throw ConfigError("compute_risk: missing calibration for layer " + std::to_string(t.layer));
    }
    const auto& sae = saes.at(t.layer);
    for (const auto& h : acts.at(t.layer, Tap::residual)) {
      const auto z = sae.encode(std::span<const float>(h));
      for (const auto& f : selection.layers.at(t.layer)) {
        auto st = cal->second.find(f.index);
        if (st == cal->second.end()) {
          throw ConfigError("compute_risk: missing calibration for latent " + std::to_string(f.index) + " at layer " +
                            std::to_string(t.layer));
        }
        const double zs = (z[f.index] - st->second.mean) / std::max(st->second.std, 1e-6);
        sum += std::clamp(zs, -10.0, 10.0);
        ++n;
      }
    }
  }
  const double mean = n == 0 ? 0.0 : sum / static_cast<double>(n);
  return 1.0 / (1.0 + std::exp(-mean));
}

AdaptiveResult adaptive_sweep(double s_start, double s_end, int steps,
                              const std::function<std::string(double)>& generate_at,
                              const std::function<double(const std::string&)>& quality) {
  if (steps < 1) throw ConfigError("adaptive steering needs S >= 1");
  AdaptiveResult best;
  best.quality = -INFINITY;
  double prev = 0;
  for (int t = 0; t < steps; ++t) {
    const double s = s_start + static_cast<double>(t) / static_cast<double>(std::max(1, steps - 1)) * (s_end - s_start);
    std::string y;
    try {
      y = generate_at(s);
    } catch (const Error& e) {
      throw Error("adaptive steering step " + std::to_string(t) + ": " + e.what());
    }
    const double q = quality(y);
    best.steps.push_back({s, q, y});
    if (t > 0 && q < 0.8 * prev) break;
    if (q > best.quality) {
      best.quality = q;
      best.text = y;
      best.strength = s;
    }
    prev = q;
  }
  return best;
}

AdaptiveResult adaptive_generate(const LanguageModel& model, const std::map<int, SparseAutoencoder>& saes,
                                 const FeatureSelection& selection, const SteeringConfig& base,
                                 const RiskCalibration& calibration, std::string_view prompt,
                                 const DecodeConfig& decode, double s0, int steps, double s_min, double s_max) {
  if (!(s_min <= s_max)) throw ConfigError("adaptive steering needs s_min <= s_max");
  if (s_min < 0 || s_max > base.alpha_max) throw ConfigError("adaptive strength range must lie in [0, alpha_max]");
  const double risk = compute_risk(model, prompt, selection, saes, calibration);
  const double s_adapt = std::clamp(s0 * (0.5 + risk), s_min, s_max);
  const double s_start = std::max(s_min, s_adapt);
  const std::string prompt_text(prompt);
  auto gen = [&](double s) {
    SteeringConfig c = base;
    c.alpha = s;
    return generate(model, prompt, decode, make_steering_hooks(saes, selection, c));
  };
  auto score = [&](const std::string& continuation) { return evaluate_quality(prompt_text + continuation); };
  AdaptiveResult r = adaptive_sweep(s_start, s_max, steps, gen, score);
  r.risk = risk;
  return r;
}

double text_similarity(std::string_view a, std::string_view b, const EmbeddingConfig& embedding) {
  if (a == b && !a.empty()) return 1.0;
  return cosine(embed_text(a, embedding), embed_text(b, embedding));
}

double semantic_difference(std::string_view a, std::string_view b, const EmbeddingConfig& embedding) {
  if (a == b) return 0.0;
  return std::clamp(100.0 * (1.0 - text_similarity(a, b, embedding)), 0.0, 100.0);
}

double regurgitation_ratio(std::string_view generation, std::string_view reference) {
  if (reference.empty()) return 1.0;
  const auto mm = std::mismatch(generation.begin(), generation.end(), reference.begin(), reference.end());
  return static_cast<double>(mm.second - reference.begin()) / static_cast<double>(reference.size());
}

Probe make_probe(std::string id, std::string_view document, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("probe prompt fraction must lie in (0, 1)");
  const auto cut = static_cast<std::size_t>(static_cast<double>(document.size()) * fraction);
  return {std::move(id), std::string(document.substr(0, cut)), std::string(document.substr(cut))};
}

SweepBaseline sweep_baseline(const LanguageModel& model, const std::vector<Probe>& probes,
                             const SweepOptions& options) {
  if (probes.empty()) throw ConfigError("sweep: no probes");
  SweepBaseline b;
  std::vector<double> sim, qual, reg;
  for (const auto& p : probes) {
    auto cont = generate(model, p.prompt, options.decode);
    sim.push_back(text_similarity(cont, p.reference, options.embedding));
    qual.push_back(evaluate_quality(p.prompt + cont));
    reg.push_back(regurgitation_ratio(cont, p.reference));
    b.continuations.push_back(std::move(cont));
  }
  b.similarity = mean_of(sim);
  b.quality = mean_of(qual);
  b.regurgitation = mean_of(reg);
  return b;
}

namespace {

SweepRecord run_cell(const LanguageModel& model, const std::map<int, SparseAutoencoder>& saes,
                     const FeatureSelection& selection, const std::vector<Probe>& probes, std::size_t k,
                     double alpha, const SweepOptions& options, const SweepBaseline& baseline) {
  if (baseline.continuations.size() != probes.size()) throw ConfigError("sweep: baseline does not match probes");
  SteeringConfig cfg = options.steering;
  cfg.alpha = alpha;
  cfg.k = k;
  NormAccumulator acc;
  const auto hooks = make_steering_hooks(saes, selection, cfg, acc.observer());
  std::vector<double> diff, sim, qual, reg;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto cont = generate(model, probes[i].prompt, options.decode, hooks);
    diff.push_back(semantic_difference(cont, baseline.continuations[i], options.embedding));
    sim.push_back(text_similarity(cont, probes[i].reference, options.embedding));
    qual.push_back(evaluate_quality(probes[i].prompt + cont));
    reg.push_back(regurgitation_ratio(cont, probes[i].reference));
  }
  SweepRecord r;
  r.k = k;
  r.alpha = alpha;
  r.sem_diff = mean_of(diff);
  r.similarity = mean_of(sim);
  r.quality = mean_of(qual);
  r.regurgitation = mean_of(reg);
  r.delta_norms = acc.means();
  return r;
}

}  // namespace

std::vector<SweepRecord> sweep(const LanguageModel& model, const std::map<int, SparseAutoencoder>& saes,
                               const FeatureSelection& selection, const std::vector<Probe>& probes,
                               const SweepOptions& options, const SweepBaseline& baseline) {
  if (options.k_values.empty() || options.alphas.empty()) throw ConfigError("sweep: empty K or alpha grid");
  std::vector<SweepRecord> out;
  for (std::size_t k : options.k_values) {
    for (double alpha : options.alphas) out.push_back(run_cell(model, saes, selection, probes, k, alpha, options, baseline));
  }
  return out;
}

std::string format_sweep_csv(const std::vector<SweepRecord>& records) {
  std::set<int> layers;
  for (const auto& r : records) {
    for (const auto& [layer, v] : r.delta_norms) layers.insert(layer);
  }
  std::string out = "K,alpha,sem_diff_pct,quality,regurgitation,similarity";
  for (int l : layers) out += ",delta_norm_L" + std::to_string(l);
  out += "\n";
  for (const auto& r : records) {
    out += std::to_string(r.k) + "," + io::format_double(r.alpha) + "," + io::format_double(r.sem_diff) + "," +
           io::format_double(r.quality) + "," + io::format_double(r.regurgitation) + "," +
           io::format_double(r.similarity);
    for (int l : layers) {
      auto it = r.delta_norms.find(l);
      out += "," + (it == r.delta_norms.end() ? std::string("0") : io::format_double(it->second));
    }
    out += "\n";
  }
  return out;
}

std::vector<SweepRecord> parse_sweep_csv(std::string_view text) {
  const auto rows = io::lines(text);
  if (rows.empty()) throw FormatError("empty sweep table");
  const auto header = io::split(rows.front(), ',');
  if (header.size() < 6 || header[0] != "K" || header[1] != "alpha" || header[2] != "sem_diff_pct") {
    throw FormatError("not a sweep table");
  }
  std::vector<int> layers;
  for (std::size_t i = 6; i < header.size(); ++i) {
    const std::string_view prefix = "delta_norm_L";
    if (header[i].substr(0, prefix.size()) != prefix) throw FormatError("unexpected sweep column");
    layers.push_back(static_cast<int>(io::parse_int(header[i].substr(prefix.size()))));
  }
  std::vector<SweepRecord> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].empty()) continue;
    const auto f = io::split(rows[r], ',');
    if (f.size() != header.size()) throw FormatError("ragged sweep row " + std::to_string(r));
    SweepRecord rec;
    rec.k = static_cast<std::size_t>(io::parse_int(f[0]));
    rec.alpha = io::parse_double(f[1]);
    rec.sem_diff = io::parse_double(f[2]);
    rec.quality = io::parse_double(f[3]);
    rec.regurgitation = io::parse_double(f[4]);
    rec.similarity = io::parse_double(f[5]);
    for (std::size_t i = 0; i < layers.size(); ++i) rec.delta_norms[layers[i]] = io::parse_double(f[6 + i]);
    out.push_back(std::move(rec));
  }
  return out;
}

KneeOversteer detect_knee_oversteer(const std::vector<SteeringPoint>& records, bool oversteer_requires_low_quality) {
  KneeOversteer out;
  for (const auto& r : records) {
    if (!out.knee && r.sem_diff >= 10.0 && r.quality < 8.0) out.knee = r;
    if (!out.oversteer && r.sem_diff >= 80.0 && (!oversteer_requires_low_quality || r.quality < 6.0)) {
      out.oversteer = r;
    }
  }
  return out;
}

double TransferResult::transfer_rate() const {
  return total_latents == 0 ? 0.0 : 100.0 * static_cast<double>(transferred) / static_cast<double>(total_latents);
}

double TransferResult::overlap_rate() const {
  return selection_size == 0 ? 0.0 : 100.0 * static_cast<double>(transferred) / static_cast<double>(selection_size);
}

std::size_t selection_overlap(const FeatureSelection& a, const FeatureSelection& b) {
  std::size_t n = 0;
  for (const auto& [layer, list] : a.layers) {
    auto it = b.layers.find(layer);
    if (it == b.layers.end()) continue;
    std::set<std::size_t> other;
    for (const auto& f : it->second) other.insert(f.index);
    for (const auto& f : list) n += other.count(f.index);
  }
  return n;
}

TransferResult transfer_eval(const LanguageModel& model, const std::map<int, SparseAutoencoder>& saes,
                             const FeatureSelection& selection_a, const FeatureSelection& selection_b,
                             const std::vector<Probe>& probes_b, std::size_t k, double alpha,
                             const SweepOptions& options, const SweepBaseline& baseline_b) {
  if (probes_b.empty()) throw ConfigError("transfer_eval: no domain-B probes");
  TransferResult t;
  t.k = k;
  t.alpha = alpha;
  const auto a = selection_a.top(k);
  const auto b = selection_b.top(k);
  t.transferred = selection_overlap(a, b);
  t.selection_size = a.total();
  t.total_latents = a.total_latents();
  t.sem_diff_a = run_cell(model, saes, a, probes_b, k, alpha, options, baseline_b).sem_diff;
  t.sem_diff_b = run_cell(model, saes, b, probes_b, k, alpha, options, baseline_b).sem_diff;
  if (t.sem_diff_b > 0) t.effectiveness = 100.0 * t.sem_diff_a / t.sem_diff_b;
  return t;
}

}  // namespace rtlguard
