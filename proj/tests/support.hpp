#pragma once
// Helpers shared by the unit tests and the acceptance suite. Everything here
// is written independently of the library code it is used to check.

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rtlguard/rng.hpp"
#include "rtlguard/rtl_lexer.hpp"

namespace testsupport {

/// Plain FNV-1a 64 straight from the published constants.
inline std::uint64_t fnv1a64_reference(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Consistently renames every non-keyword identifier to a name drawn from an
/// unrelated stem pool.
inline std::string rename_identifiers(std::string_view source, std::uint64_t seed) {
  const auto tokens = rtlguard::tokenize(source);
  rtlguard::Rng rng(seed);
  static const char* kStems[] = {"qx", "zv", "kw", "jy", "fq", "vk"};
  std::map<std::string, std::string> mapping;
  std::string out;
  std::size_t pos = 0;
  for (const auto& t : tokens) {
    if (t.kind != rtlguard::TokenKind::identifier) continue;
    auto it = mapping.find(t.text);
    if (it == mapping.end()) {
      const std::string fresh =
          std::string(kStems[rng.below(6)]) + "_" + std::to_string(mapping.size()) + "_" + std::to_string(rng.below(90) + 10);
      it = mapping.emplace(t.text, fresh).first;
    }
    out.append(source.substr(pos, t.offset - pos));
    out += it->second;
    pos = t.offset + t.text.size();
  }
  out.append(source.substr(pos));
  return out;
}

/// Inserts extra whitespace, line breaks and comments between tokens and
/// strips existing comments. Token sequence is unchanged.
inline std::string perturb_layout(std::string_view source, std::uint64_t seed) {
  const auto tokens = rtlguard::tokenize(source);
  rtlguard::Rng rng(seed);
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (i > 0) {
      const bool had_newline = source.substr(tokens[i - 1].offset, t.offset - tokens[i - 1].offset).find('\n') !=
                               std::string_view::npos;
      const auto r = rng.below(10);
      if (r == 0) {
        out += "  // review note " + std::to_string(rng.below(1000)) + "\n";
      } else if (r == 1) {
        out += " /* tmp */ ";
      } else if (had_newline || r == 2) {
        out += "\n" + std::string(rng.below(6), ' ');
      } else {
        out += std::string(1 + rng.below(3), ' ');
      }
    }
    out += t.text;
  }
  out += "\n";
  return out;
}

struct PlantedData {
  std::vector<std::vector<double>> atoms;
  std::vector<std::vector<double>> samples;
};

/// Samples that are non-negative combinations of `sparsity` random unit atoms.
inline PlantedData planted_dictionary(std::size_t d, std::size_t atoms, std::size_t sparsity, std::size_t n,
                                      std::uint64_t seed) {
  rtlguard::Rng rng(seed);
  PlantedData p;
  p.atoms.assign(atoms, std::vector<double>(d));
  for (auto& a : p.atoms) {
    double norm = 0;
    for (auto& v : a) {
      v = rng.normal();
      norm += v * v;
    }
    for (auto& v : a) v /= std::sqrt(norm);
  }
  std::vector<std::size_t> idx(atoms);
  for (std::size_t i = 0; i < atoms; ++i) idx[i] = i;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> h(d, 0.0);
    rng.shuffle(idx);
    for (std::size_t t = 0; t < sparsity; ++t) {
      const double c = rng.uniform(0.5, 1.5);
      for (std::size_t i = 0; i < d; ++i) h[i] += c * p.atoms[idx[t]][i];
    }
    p.samples.push_back(std::move(h));
  }
  return p;
}

inline double cosine(const std::vector<double>& a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace testsupport
