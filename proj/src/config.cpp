#include "rtlguard/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "rtlguard/io.hpp"

namespace rtlguard {

namespace {

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += io::format_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

std::vector<std::string_view> list_items(std::string_view text) {
  std::vector<std::string_view> out;
  if (io::trim(text).empty()) return out;
  for (auto part : io::split(text, ',')) out.push_back(io::trim(part));
  return out;
}

long long to_int(std::string_view v) { return io::parse_int(io::trim(v)); }

std::size_t to_size(std::string_view v) {
  const auto n = to_int(v);
  if (n < 0) throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  return static_cast<std::size_t>(n);
}

std::uint64_t to_u64(std::string_view v) {
  v = io::trim(v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected an unsigned 64-bit integer, got '" + std::string(v) + "'");
  }
  return out;
}

double to_double(std::string_view v) { return io::parse_double(io::trim(v)); }

bool to_bool(std::string_view v) {
  v = io::trim(v);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

template <typename T, typename F>
std::vector<T> to_list(std::string_view v, F convert) {
  std::vector<T> out;
  for (auto item : list_items(v)) out.push_back(static_cast<T>(convert(item)));
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(PipelineConfig&, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define RTLGUARD_FIELD(sec, name, member, parse, render)                                           \
  Field {                                                                                          \
    sec, name, [](PipelineConfig& c, std::string_view v) { c.member = parse(v); },                 \
        [](const PipelineConfig& c) { return render(c.member); }                                  \
  }

std::string str_u64(std::uint64_t v) { return std::to_string(v); }
std::string str_size(std::size_t v) { return std::to_string(v); }
std::string str_int(int v) { return std::to_string(v); }
std::string str_double(double v) { return io::format_double(v); }
std::string str_bool(bool v) { return v ? "true" : "false"; }
std::string str_path(const std::filesystem::path& p) { return p.generic_string(); }
std::filesystem::path to_path(std::string_view v) { return std::filesystem::path(std::string(io::trim(v))); }
int to_int32(std::string_view v) { return static_cast<int>(to_int(v)); }

std::string str_dims(const std::array<std::size_t, kFamilyCount>& a) {
  return join(std::vector<std::size_t>(a.begin(), a.end()));
}
std::string str_weights(const std::array<double, kFamilyCount>& a) {
  return join(std::vector<double>(a.begin(), a.end()));
}

template <typename T, typename F>
std::array<T, kFamilyCount> to_family_array(std::string_view v, F convert) {
  const auto items = to_list<T>(v, convert);
  if (items.size() != kFamilyCount) {
    throw ConfigError("expected " + std::to_string(kFamilyCount) + " comma-separated values (one per family)");
  }
  std::array<T, kFamilyCount> out{};
  std::copy(items.begin(), items.end(), out.begin());
  return out;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      RTLGUARD_FIELD("run", "seed", seed, to_u64, str_u64),
      RTLGUARD_FIELD("run", "out", out, to_path, str_path),

      RTLGUARD_FIELD("corpus", "manifest", manifest, to_path, str_path),
      RTLGUARD_FIELD("corpus", "semantic_vectors", semantic_vectors, to_path, str_path),
      RTLGUARD_FIELD("corpus", "seed", corpus_seed, to_u64, str_u64),
      RTLGUARD_FIELD("corpus", "combinational", synth.combinational, to_size, str_size),
      RTLGUARD_FIELD("corpus", "sequential", synth.sequential, to_size, str_size),
      RTLGUARD_FIELD("corpus", "routing", synth.routing, to_size, str_size),
      RTLGUARD_FIELD("corpus", "non_sensitive", partition.non_sensitive, to_size, str_size),
      RTLGUARD_FIELD("corpus", "proprietary", partition.proprietary, to_size, str_size),
      RTLGUARD_FIELD("corpus", "diagnostic", partition.diagnostic, to_size, str_size),

      Field{"embedding", "dims",
            [](PipelineConfig& c, std::string_view v) { c.embedding.dims = to_family_array<std::size_t>(v, to_size); },
            [](const PipelineConfig& c) { return str_dims(c.embedding.dims); }},
      Field{"embedding", "weights",
            [](PipelineConfig& c, std::string_view v) { c.embedding.weights = to_family_array<double>(v, to_double); },
            [](const PipelineConfig& c) { return str_weights(c.embedding.weights); }},
      RTLGUARD_FIELD("embedding", "identifier_cap", identifier_cap, to_size, str_size),
      RTLGUARD_FIELD("embedding", "query_k", query_k, to_size, str_size),

      RTLGUARD_FIELD("lm", "layers", lm.layers, to_int32, str_int),
      RTLGUARD_FIELD("lm", "hidden", lm.hidden, to_int32, str_int),
      RTLGUARD_FIELD("lm", "heads", lm.heads, to_int32, str_int),
      RTLGUARD_FIELD("lm", "context", lm.context, to_int32, str_int),
      RTLGUARD_FIELD("lm", "seed", lm.seed, to_u64, str_u64),
      RTLGUARD_FIELD("lm", "steps", lm_steps, to_int32, str_int),
      RTLGUARD_FIELD("lm", "learning_rate", lm_learning_rate, to_double, str_double),
      RTLGUARD_FIELD("lm", "batch", lm_batch, to_int32, str_int),
      RTLGUARD_FIELD("lm", "warmup", lm_warmup, to_int32, str_int),
      RTLGUARD_FIELD("lm", "weight_decay", lm_weight_decay, to_double, str_double),

      Field{"activations", "layers",
            [](PipelineConfig& c, std::string_view v) { c.layers = to_list<int>(v, to_int); },
            [](const PipelineConfig& c) { return join(c.layers); }},
      Field{"activations", "tap", [](PipelineConfig& c, std::string_view v) { c.tap = parse_tap(io::trim(v)); },
            [](const PipelineConfig& c) { return std::string(to_string(c.tap)); }},

      RTLGUARD_FIELD("sae", "latents", sae_latents, to_size, str_size),
      RTLGUARD_FIELD("sae", "lambda", sae_lambda, to_double, str_double),
      RTLGUARD_FIELD("sae", "steps", sae_steps, to_int32, str_int),
      RTLGUARD_FIELD("sae", "learning_rate", sae_learning_rate, to_double, str_double),
      RTLGUARD_FIELD("sae", "batch", sae_batch, to_size, str_size),
      RTLGUARD_FIELD("sae", "seed", sae_seed, to_u64, str_u64),

      Field{"identify", "rule",
            [](PipelineConfig& c, std::string_view v) { c.rule = SelectionRule::parse(io::trim(v)); },
            [](const PipelineConfig& c) { return c.rule.describe(); }},

      RTLGUARD_FIELD("steering", "alpha", steering.alpha, to_double, str_double),
      RTLGUARD_FIELD("steering", "alpha_max", steering.alpha_max, to_double, str_double),
      RTLGUARD_FIELD("steering", "k", steering.k, to_size, str_size),
      Field{"steering", "layers",
            [](PipelineConfig& c, std::string_view v) { c.steering.layers = to_list<int>(v, to_int); },
            [](const PipelineConfig& c) { return join(c.steering.layers); }},
      Field{"steering", "mode",
            [](PipelineConfig& c, std::string_view v) { c.steering.mode = parse_edit_mode(io::trim(v)); },
            [](const PipelineConfig& c) { return std::string(to_string(c.steering.mode)); }},
      Field{"steering", "weighting",
            [](PipelineConfig& c, std::string_view v) { c.steering.weighting = parse_weighting(io::trim(v)); },
            [](const PipelineConfig& c) { return std::string(to_string(c.steering.weighting)); }},
      RTLGUARD_FIELD("steering", "norm_runs", norm_runs, to_int32, str_int),

      Field{"sweep", "k_values",
            [](PipelineConfig& c, std::string_view v) { c.k_values = to_list<std::size_t>(v, to_size); },
            [](const PipelineConfig& c) { return join(c.k_values); }},
      Field{"sweep", "alphas",
            [](PipelineConfig& c, std::string_view v) { c.alphas = to_list<double>(v, to_double); },
            [](const PipelineConfig& c) { return join(c.alphas); }},
      RTLGUARD_FIELD("sweep", "prompt_fraction", prompt_fraction, to_double, str_double),
      RTLGUARD_FIELD("sweep", "max_new_tokens", max_new_tokens, to_int32, str_int),
      RTLGUARD_FIELD("sweep", "temperature", temperature, to_double, str_double),
      RTLGUARD_FIELD("sweep", "decode_seed", decode_seed, to_u64, str_u64),
      RTLGUARD_FIELD("sweep", "min_quality", min_quality, to_double, str_double),
      RTLGUARD_FIELD("sweep", "max_perplexity_increase", max_perplexity_increase, to_double, str_double),

      Field{"transfer", "source",
            [](PipelineConfig& c, std::string_view v) { c.transfer_source = parse_category(io::trim(v)); },
            [](const PipelineConfig& c) { return std::string(to_string(c.transfer_source)); }},
      Field{"transfer", "target",
            [](PipelineConfig& c, std::string_view v) { c.transfer_target = parse_category(io::trim(v)); },
            [](const PipelineConfig& c) { return std::string(to_string(c.transfer_target)); }},
      Field{"transfer", "k_values",
            [](PipelineConfig& c, std::string_view v) { c.transfer_k = to_list<std::size_t>(v, to_size); },
            [](const PipelineConfig& c) { return join(c.transfer_k); }},
      RTLGUARD_FIELD("transfer", "alpha", transfer_alpha, to_double, str_double),

      RTLGUARD_FIELD("adaptive", "enabled", adaptive, to_bool, str_bool),
      RTLGUARD_FIELD("adaptive", "probes", adaptive_probes, to_size, str_size),
      RTLGUARD_FIELD("adaptive", "s0", adaptive_s0, to_double, str_double),
      RTLGUARD_FIELD("adaptive", "steps", adaptive_steps, to_int32, str_int),
      RTLGUARD_FIELD("adaptive", "s_min", adaptive_s_min, to_double, str_double),
      RTLGUARD_FIELD("adaptive", "s_max", adaptive_s_max, to_double, str_double),
  };
  return table;
}

#undef RTLGUARD_FIELD

}  // namespace

void PipelineConfig::validate() const {
  embedding.validate();
  lm.validate();
  if (identifier_cap < 1) throw ConfigError("embedding.identifier_cap must be >= 1");
  if (query_k < 1) throw ConfigError("embedding.query_k must be >= 1");
  if (lm_steps < 1 || lm_batch < 1 || lm_warmup < 0) throw ConfigError("lm.steps and lm.batch must be >= 1");
  if (!(lm_learning_rate > 0)) throw ConfigError("lm.learning_rate must be > 0");
  for (int l : layers) {
    if (l < 1 || l > lm.layers) throw ConfigError("activations.layers entry " + std::to_string(l) + " out of range");
  }
  if (sae_latents < 1 || sae_steps < 1 || sae_batch < 1) throw ConfigError("sae.latents, sae.steps, sae.batch must be >= 1");
  if (!(sae_lambda >= 0) || !(sae_learning_rate > 0)) throw ConfigError("sae.lambda must be >= 0, sae.learning_rate > 0");
  steering.validate();
  for (int l : steering.layers) {
    if (l < 1 || l > lm.layers) throw ConfigError("steering.layers entry " + std::to_string(l) + " out of range");
  }
  if (norm_runs < 1) throw ConfigError("steering.norm_runs must be >= 1");
  if (k_values.empty() || alphas.empty()) throw ConfigError("sweep.k_values and sweep.alphas must be non-empty");
  for (double a : alphas) {
    if (!(a >= 0 && a <= steering.alpha_max)) throw ConfigError("sweep.alphas must lie in [0, steering.alpha_max]");
  }
  if (!std::is_sorted(alphas.begin(), alphas.end()) || !std::is_sorted(k_values.begin(), k_values.end())) {
    throw ConfigError("sweep.k_values and sweep.alphas must be ascending");
  }
  if (!(prompt_fraction > 0 && prompt_fraction < 1)) throw ConfigError("sweep.prompt_fraction must lie in (0, 1)");
  if (max_new_tokens < 1) throw ConfigError("sweep.max_new_tokens must be >= 1");
  if (!(temperature >= 0)) throw ConfigError("sweep.temperature must be >= 0");
  if (!(max_perplexity_increase >= 0)) throw ConfigError("sweep.max_perplexity_increase must be >= 0");
  if (transfer_source == transfer_target) throw ConfigError("transfer.source and transfer.target must differ");
  if (transfer_k.empty()) throw ConfigError("transfer.k_values must be non-empty");
  if (!(transfer_alpha >= 0 && transfer_alpha <= steering.alpha_max)) {
    throw ConfigError("transfer.alpha must lie in [0, steering.alpha_max]");
  }
  if (adaptive) {
    if (adaptive_steps < 1) throw ConfigError("adaptive.steps must be >= 1");
    if (!(adaptive_s_min >= 0 && adaptive_s_min <= adaptive_s_max && adaptive_s_max <= steering.alpha_max)) {
      throw ConfigError("adaptive strengths need 0 <= s_min <= s_max <= steering.alpha_max");
    }
  }
}

DecodeConfig PipelineConfig::decode() const {
  DecodeConfig d;
  d.temperature = temperature;
  d.seed = decode_seed;
  d.max_new_tokens = max_new_tokens;
  return d;
}

SemanticProvider PipelineConfig::semantic_provider() const {
  if (semantic_vectors.empty()) return SemanticProvider::hashed_ngram(embedding.dim(Family::semantic));
  auto table = load_precomputed_vectors(semantic_vectors);
  if (table.dim != embedding.dim(Family::semantic)) {
    throw ConfigError("semantic vector file has dimension " + std::to_string(table.dim) +
                      " but embedding.dims gives the semantic family " +
                      std::to_string(embedding.dim(Family::semantic)));
  }
  return SemanticProvider::precomputed(std::move(table));
}

PipelineConfig parse_config(std::string_view text, std::optional<std::uint64_t> seed_override) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  PipelineConfig c;
  std::set<std::string> given;
  for (const auto& [section, keys] : tree) {
    if (keys.empty()) {
      if (!keys.data().empty()) throw ConfigError("config: key '" + section + "' outside any section");
    }
    for (const auto& [key, node] : keys) {
      const auto& table = fields();
      auto it = std::find_if(table.begin(), table.end(),
                             [&](const Field& f) { return f.section == section && f.key == key; });
      if (it == table.end()) throw ConfigError("config: unknown key '" + section + "." + key + "'");
      try {
        it->set(c, node.data());
      } catch (const ConfigError& e) {
        throw ConfigError("config: " + section + "." + key + ": " + e.what());
      } catch (const FormatError& e) {
        throw ConfigError("config: " + section + "." + key + ": " + e.what());
      }
      given.insert(section + "." + key);
    }
  }
  if (seed_override) c.seed = *seed_override;
  if (!given.count("corpus.seed")) c.corpus_seed = c.seed;
  if (!given.count("lm.seed")) c.lm.seed = c.seed + 1;
  if (!given.count("sae.seed")) c.sae_seed = c.seed + 2;
  if (!given.count("sweep.decode_seed")) c.decode_seed = c.seed + 3;
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  auto c = parse_config(text, seed_override);
  // Relative paths in the file are relative to the file itself.
  const auto base = path.parent_path();
  if (!c.manifest.empty() && c.manifest.is_relative()) c.manifest = base / c.manifest;
  if (!c.semantic_vectors.empty() && c.semantic_vectors.is_relative()) c.semantic_vectors = base / c.semantic_vectors;
  return c;
}

std::string format_config(const PipelineConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace rtlguard
