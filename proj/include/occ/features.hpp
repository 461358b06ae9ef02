#pragma once

// Lexical feature blocks for a Latin/Occitan lemma pair: prefix and suffix
// character n-grams, vowel-run syllable counts, VC templates, a stress
// position proxy, length meta-features and optional embedding blocks.

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "occ/common.hpp"
#include "occ/corpus.hpp"
#include "occ/text.hpp"
#include "occ/vectors.hpp"

namespace occ {

enum class Block { LatinNgrams, OccitanNgrams, Syllables, VcPatterns, Stress, Meta, Embedding };

inline constexpr std::array<Block, 7> kAllBlocks = {Block::LatinNgrams, Block::OccitanNgrams, Block::Syllables,
                                                    Block::VcPatterns,  Block::Stress,        Block::Meta,
                                                    Block::Embedding};

inline std::string_view to_string(Block b) {
  switch (b) {
    case Block::LatinNgrams: return "latin_ngrams";
    case Block::OccitanNgrams: return "occitan_ngrams";
    case Block::Syllables: return "syllables";
    case Block::VcPatterns: return "vc_patterns";
    case Block::Stress: return "stress";
    case Block::Meta: return "meta";
    case Block::Embedding: return "embedding";
  }
  return "?";
}

inline Block parse_block(std::string_view s) {
  for (Block b : kAllBlocks)
    if (to_string(b) == s) return b;
  throw PreconditionError("unknown feature block '" + std::string(s) + "'");
}

using FeatureMap = std::map<std::string, double>;

/// Named feature blocks. Block names are free-form strings so other
/// representations (the context encoder) reuse the same container.
struct FeatureVector {
  std::map<std::string, FeatureMap> blocks;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [_, b] : blocks) n += b.size();
    return n;
  }

  /// Flat view with "block/feature" keys.
  FeatureMap flatten() const {
    FeatureMap out;
    for (const auto& [name, b] : blocks)
      for (const auto& [f, v] : b) out.emplace(name + "/" + f, v);
    return out;
  }

  FeatureVector without(const std::set<std::string>& dropped) const {
    FeatureVector out;
    for (const auto& [name, b] : blocks)
      if (!dropped.count(name)) out.blocks.emplace(name, b);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Component extractors

struct NgramFeatures {
  std::vector<std::string> prefixes;  // one per n in [n_min, n_max]
  std::vector<std::string> suffixes;
};

/// Prefix/suffix of each order n, truncated to the word when it is shorter.
inline NgramFeatures char_ngrams(std::string_view lemma, int n_min = 1, int n_max = 4) {
  if (n_min < 1 || n_max < n_min) throw PreconditionError("need 1 <= n_min <= n_max");
  if (lemma.empty()) throw PreconditionError("empty lemma");
  NgramFeatures out;
  for (int n = n_min; n <= n_max; ++n) {
    out.prefixes.push_back(text::prefix(lemma, static_cast<std::size_t>(n)));
    out.suffixes.push_back(text::suffix(lemma, static_cast<std::size_t>(n)));
  }
  return out;
}

inline FeatureMap ngram_indicators(std::string_view lemma, int n_min = 1, int n_max = 4) {
  auto g = char_ngrams(lemma, n_min, n_max);
  FeatureMap m;
  for (int n = n_min; n <= n_max; ++n) {
    const auto i = static_cast<std::size_t>(n - n_min);
    m["pre_" + std::to_string(n) + "=" + g.prefixes[i]] = 1.0;
    m["suf_" + std::to_string(n) + "=" + g.suffixes[i]] = 1.0;
  }
  return m;
}

/// Letters only: the code points the VC template and syllable count look at.
inline std::u32string letters(std::string_view word) {
  std::u32string out;
  for (char32_t c : text::to_u32(word))
    if (text::is_letter(c)) out.push_back(c);
  return out;
}

/// Each letter becomes V (a e i o u) or C; non-letters are dropped.
inline std::string vc_template(std::string_view word, Diagnostics* diag = nullptr) {
  auto cps = text::to_u32(word);
  auto ls = letters(word);
  if (ls.size() != cps.size()) note(diag, "vc_template: dropped non-letters in '" + std::string(word) + "'");
  std::string out;
  out.reserve(ls.size());
  for (char32_t c : ls) out.push_back(text::is_vowel(c) ? 'V' : 'C');
  return out;
}

/// Number of maximal vowel runs among the word's letters.
inline std::size_t syllable_count(std::string_view word) {
  std::size_t runs = 0;
  bool in_vowel = false;
  for (char32_t c : letters(word)) {
    const bool v = text::is_vowel(c);
    if (v && !in_vowel) ++runs;
    in_vowel = v;
  }
  return runs;
}

enum class Stress { ULTIMATE, PENULTIMATE, ANTEPENULTIMATE };

inline std::string_view to_string(Stress s) {
  switch (s) {
    case Stress::ULTIMATE: return "ULTIMATE";
    case Stress::PENULTIMATE: return "PENULTIMATE";
    case Stress::ANTEPENULTIMATE: return "ANTEPENULTIMATE";
  }
  return "?";
}

/// Monosyllables: ultimate. Disyllables: penult. Longer words: penult when
/// it is closed (at least two consonants before the final vowel run),
/// otherwise antepenult. Vowel length is not visible in the spelling.
inline Stress stress_proxy(std::string_view word) {
  const std::string vc = vc_template(word);
  std::vector<std::pair<std::size_t, std::size_t>> runs;  // [begin, end) of vowel runs
  for (std::size_t i = 0; i < vc.size();) {
    if (vc[i] != 'V') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < vc.size() && vc[j] == 'V') ++j;
    runs.emplace_back(i, j);
    i = j;
  }
  if (runs.empty()) throw PreconditionError("stress_proxy: no vowel in '" + std::string(word) + "'");
  if (runs.size() == 1) return Stress::ULTIMATE;
  if (runs.size() == 2) return Stress::PENULTIMATE;
  const std::size_t gap = runs[runs.size() - 1].first - runs[runs.size() - 2].second;
  return gap >= 2 ? Stress::PENULTIMATE : Stress::ANTEPENULTIMATE;
}

/// Length features: len_lat, len_occ, len_diff, len_ratio, plus the Latin
/// gender one-hot.
inline FeatureMap meta_features(const LemmaPair& pair) {
  const double lat = static_cast<double>(text::length(pair.latin_lemma));
  const double occ = static_cast<double>(text::length(pair.occitan_lemma));
  if (occ == 0) throw PreconditionError("meta_features: empty Occitan lemma");
  FeatureMap m{{"len_lat", lat}, {"len_occ", occ}, {"len_diff", lat - occ}, {"len_ratio", lat / occ}};
  for (LatinGender g : {LatinGender::M, LatinGender::F, LatinGender::N})
    m["lat_gender=" + std::string(to_string(g))] = pair.latin_gender == g ? 1.0 : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Assembly

inline std::set<Block> all_blocks() { return {kAllBlocks.begin(), kAllBlocks.end()}; }

inline FeatureVector assemble(const LemmaPair& pair, const VectorTable* vectors = nullptr,
                              const std::set<Block>& enabled = all_blocks(), Diagnostics* diag = nullptr) {
  FeatureVector fv;
  const auto& lat = pair.latin_lemma;
  const auto& occ = pair.occitan_lemma;
  auto on = [&](Block b) { return enabled.count(b) > 0; };

  if (on(Block::LatinNgrams)) fv.blocks["latin_ngrams"] = ngram_indicators(lat);
  if (on(Block::OccitanNgrams)) fv.blocks["occitan_ngrams"] = ngram_indicators(occ);
  if (on(Block::Syllables))
    fv.blocks["syllables"] = {{"S_lat", static_cast<double>(syllable_count(lat))},
                              {"S_occ", static_cast<double>(syllable_count(occ))}};
  if (on(Block::VcPatterns))
    fv.blocks["vc_patterns"] = {{"P_lat=" + vc_template(lat, diag), 1.0}, {"P_occ=" + vc_template(occ, diag), 1.0}};
  if (on(Block::Stress)) {
    auto& b = fv.blocks["stress"];
    for (const auto& [tag, w] : {std::pair{"lat", &lat}, std::pair{"occ", &occ}}) {
      if (syllable_count(*w) == 0) {
        note(diag, "stress: no vowel in '" + *w + "'");
        b[std::string("stress_") + tag + "=NONE"] = 1.0;
      } else {
        b[std::string("stress_") + tag + "=" + std::string(to_string(stress_proxy(*w)))] = 1.0;
      }
    }
  }
  if (on(Block::Meta)) fv.blocks["meta"] = meta_features(pair);
  if (on(Block::Embedding) && vectors) {
    auto& b = fv.blocks["embedding"];
    for (const auto& [tag, w] : {std::pair{"occ", &occ}, std::pair{"lat", &lat}}) {
      const auto* v = vectors->find(*w);
      if (!v) note(diag, "embedding: no vector for '" + *w + "', using zeros");
      for (std::size_t i = 0; i < vectors->dim(); ++i)
        b[std::string(tag) + "_" + std::to_string(i)] = v ? (*v)[i] : 0.0;
    }
  }
  return fv;
}

// ---------------------------------------------------------------------------
// JSON-lines dump. Besides the block map each record carries the Occitan
// gender label and the lemma-id used for grouped cross-validation.

struct FeatureRecord {
  std::string occitan_lemma;
  std::string latin_lemma;
  std::optional<OccGender> label;
  std::string lemma_id;
  FeatureVector features;
};

inline nlohmann::json to_json(const FeatureVector& fv) {
  nlohmann::json blocks = nlohmann::json::object();
  for (const auto& [name, b] : fv.blocks) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [f, v] : b) m[f] = v;
    blocks[name] = m;
  }
  return blocks;
}

inline std::string format_feature_record(const FeatureRecord& r) {
  nlohmann::json j{{"occitan_lemma", r.occitan_lemma},
                   {"latin_lemma", r.latin_lemma},
                   {"lemma_id", r.lemma_id},
                   {"blocks", to_json(r.features)}};
  if (r.label) j["occitan_gender"] = to_string(*r.label);
  return j.dump();
}

inline FeatureRecord parse_feature_record(std::string_view line) {
  try {
    auto j = nlohmann::json::parse(line);
    FeatureRecord r;
    r.occitan_lemma = j.at("occitan_lemma").get<std::string>();
    r.latin_lemma = j.at("latin_lemma").get<std::string>();
    r.lemma_id = j.value("lemma_id", r.latin_lemma);
    if (j.contains("occitan_gender")) {
      r.label = parse_occ_gender(j["occitan_gender"].get<std::string>());
      if (!r.label) throw LoadError("occitan_gender must be M or F");
    }
    for (const auto& [name, b] : j.at("blocks").items()) {
      auto& out = r.features.blocks[name];
      for (const auto& [f, v] : b.items()) out[f] = v.get<double>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("feature record: ") + e.what());
  }
}

}  // namespace occ
