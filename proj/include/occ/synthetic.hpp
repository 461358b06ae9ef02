#pragma once

// Synthetic tagged corpus in which the determiner before each noun (lo/la)
// encodes the noun's gender and nothing else does: noun and Latin forms are
// random strings, the Latin gender is random, and filler words are drawn
// independently of gender.

#include <set>
#include <string>
#include <vector>

#include "occ/common.hpp"
#include "occ/corpus.hpp"
#include "occ/rng.hpp"

namespace occ {

struct SyntheticConfig {
  std::size_t sentences = 2000;
  std::size_t lemmas = 300;
  std::uint64_t seed = 13;
};

struct SyntheticCorpus {
  std::vector<TaggedSentence> corpus;
  std::vector<LemmaPair> lexicon;
};

namespace detail {

inline std::string random_form(Rng& rng, std::size_t min_syll, std::size_t max_syll) {
  static const char* onsets[] = {"b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "br", "tr", "cl"};
  static const char* nuclei[] = {"a", "e", "i", "o", "u", "au", "ie"};
  static const char* codas[] = {"", "", "", "n", "r", "s", "t", "l", "m"};
  const std::size_t n = min_syll + rng.below(max_syll - min_syll + 1);
  std::string w;
  for (std::size_t i = 0; i < n; ++i) {
    w += onsets[rng.below(std::size(onsets))];
    w += nuclei[rng.below(std::size(nuclei))];
  }
  w += codas[rng.below(std::size(codas))];
  return w;
}

}  // namespace detail

inline SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& cfg = {}) {
  if (cfg.sentences == 0 || cfg.lemmas < 2) throw PreconditionError("synthetic corpus needs sentences > 0 and lemmas >= 2");
  Rng rng(cfg.seed, "synthetic");
  SyntheticCorpus out;

  static const std::vector<std::string> verbs = {"ditz", "fo", "era", "venc", "vol", "fetz", "ac", "vic"};
  static const std::vector<std::string> adps = {"de", "en", "per", "ab", "sus"};
  static const std::vector<std::string> adjs = {"bel", "gran", "bon", "fort", "vielh", "nou"};
  static const std::vector<std::string> prons = {"el", "ilh", "nos", "vos"};
  static const std::vector<std::string> conjs = {"e", "o", "mas"};
  const std::set<std::string> reserved = {"lo", "la", "ditz", "fo", "era", "venc", "vol", "fetz", "ac", "vic",
                                          "de", "en", "per", "ab", "sus", "bel", "gran", "bon", "fort", "vielh",
                                          "nou", "el", "ilh", "nos", "vos", "e", "o", "mas"};

  std::set<std::string> used(reserved);
  std::set<std::string> used_latin;
  for (std::size_t l = 0; l < cfg.lemmas; ++l) {
    std::string occ, lat;
    do occ = detail::random_form(rng, 2, 3);
    while (!used.insert(occ).second);
    do lat = detail::random_form(rng, 2, 4);
    while (!used_latin.insert(lat).second);
    const OccGender g = rng.coin() ? OccGender::F : OccGender::M;
    const LatinGender lg = static_cast<LatinGender>(rng.below(3));
    out.lexicon.push_back({occ, lat, g, lg, Source::DOM});
  }

  auto pick = [&](const std::vector<std::string>& v) -> const std::string& { return v[rng.below(v.size())]; };
  for (std::size_t s = 0; s < cfg.sentences; ++s) {
    const auto& lemma = out.lexicon[rng.below(out.lexicon.size())];
    std::vector<std::pair<std::string, Pos>> toks;
    if (rng.coin()) toks.emplace_back(pick(prons), Pos::PRON);
    if (rng.coin()) toks.emplace_back(pick(verbs), Pos::VERB);
    toks.emplace_back(lemma.occitan_gender == OccGender::F ? "la" : "lo", Pos::DET);
    if (rng.below(3) == 0) toks.emplace_back(pick(adjs), Pos::ADJ);
    toks.emplace_back(lemma.occitan_lemma, Pos::NOUN);
    toks.emplace_back(pick(verbs), Pos::VERB);
    if (rng.coin()) toks.emplace_back(pick(adps), Pos::ADP);
    if (rng.below(3) == 0) {
      toks.emplace_back(pick(conjs), Pos::CCONJ);
      toks.emplace_back(pick(verbs), Pos::VERB);
    }
    toks.emplace_back(".", Pos::PUNCT);

    TaggedSentence sent{"syn" + std::to_string(s + 1), {}};
    for (std::size_t i = 0; i < toks.size(); ++i) sent.tokens.push_back({toks[i].first, toks[i].first, toks[i].second, i});
    out.corpus.push_back(std::move(sent));
  }
  return out;
}

}  // namespace occ
