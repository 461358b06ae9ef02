#pragma once

// Fuzzy Latin-Occitan lemma alignment of corpus nouns.
//
//   sim(x, y) = alpha * cos(x, y) + (1 - alpha) * lev(x, y)
//   lev(x, y) = 1 - edit_distance(x, y) / max(|x|, |y|)
//
// A noun token is aligned by exact lemma match when one exists; otherwise
// the most similar lexicon lemma is taken if sim >= tau, else the token is
// logged as skipped.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "occ/common.hpp"
#include "occ/corpus.hpp"
#include "occ/io.hpp"
#include "occ/parallel.hpp"
#include "occ/text.hpp"
#include "occ/vectors.hpp"

namespace occ {

struct SimilarityConfig {
  double alpha = 0.3;
  double tau = 0.85;
  /// Skip candidates whose length differs by more than 3 code points.
  bool length_prefilter = false;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw PreconditionError("alpha must be in [0,1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw PreconditionError("tau must be in [0,1]");
  }
};

/// Levenshtein distance over code points (two-row DP).
inline std::size_t edit_distance(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Two empty strings count as identical (1.0).
inline double lev_sim(std::string_view x, std::string_view y) {
  auto a = text::to_u32(x), b = text::to_u32(y);
  const std::size_t m = std::max(a.size(), b.size());
  if (m == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(a, b)) / static_cast<double>(m);
}

/// Character-bigram count vector cosine; identical strings score 1.
inline double bigram_cosine(std::string_view x, std::string_view y) {
  if (x == y) return 1.0;
  auto grams = [](std::string_view s) {
    auto u = text::to_u32(s);
    std::map<std::u32string, double> g;
    for (std::size_t i = 0; i + 1 < u.size(); ++i) g[u.substr(i, 2)] += 1.0;
    return g;
  };
  auto gx = grams(x), gy = grams(y);
  if (gx.empty() || gy.empty()) return 0.0;
  double dot = 0, nx = 0, ny = 0;
  for (auto& [k, v] : gx) {
    nx += v * v;
    auto it = gy.find(k);
    if (it != gy.end()) dot += v * it->second;
  }
  for (auto& [k, v] : gy) ny += v * v;
  return std::clamp(dot / (std::sqrt(nx) * std::sqrt(ny)), 0.0, 1.0);
}

/// Embedding cosine when both words have vectors (negatives clamp to 0),
/// otherwise the bigram fallback.
inline double cos_sim(const std::string& x, const std::string& y, const VectorTable* vectors = nullptr) {
  if (vectors) {
    const auto* vx = vectors->find(x);
    const auto* vy = vectors->find(y);
    if (vx && vy) return std::clamp(cosine(*vx, *vy), 0.0, 1.0);
  }
  return bigram_cosine(x, y);
}

inline double sim(const std::string& x, const std::string& y, const SimilarityConfig& cfg = {},
                  const VectorTable* vectors = nullptr) {
  const double lev = lev_sim(x, y);
  if (cfg.alpha == 0.0) return lev;
  return std::clamp(cfg.alpha * cos_sim(x, y, vectors) + (1.0 - cfg.alpha) * lev, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Table construction

enum class MatchKind { EXACT, FUZZY };

inline std::string_view to_string(MatchKind k) { return k == MatchKind::EXACT ? "EXACT" : "FUZZY"; }

struct AlignedRow {
  std::string occitan_lemma;
  std::size_t sentence = 0;  // index into the corpus passed to build_table
  std::string sent_id;
  std::size_t noun_index = 0;
  std::string latin_lemma;
  OccGender occitan_gender = OccGender::M;
  LatinGender latin_gender = LatinGender::N;
  MatchKind match_kind = MatchKind::EXACT;
  double similarity = 1.0;
};

struct SkipRecord {
  std::string sent_id;
  std::size_t noun_index = 0;
  std::string surface;
  std::string best_candidate;
  double best_similarity = 0.0;
};

struct AlignmentResult {
  std::vector<AlignedRow> rows;
  std::vector<SkipRecord> skips;
  Diagnostics diagnostics;
};

namespace detail {

struct Candidate {
  const LemmaPair* pair = nullptr;
  double sim = -1.0;
  double lev = -1.0;
};

// Higher sim, then higher lev_sim, then smaller latin_lemma, then source priority.
inline bool better(const Candidate& a, const Candidate& b) {
  if (!b.pair) return true;
  if (a.sim != b.sim) return a.sim > b.sim;
  if (a.lev != b.lev) return a.lev > b.lev;
  if (a.pair->latin_lemma != b.pair->latin_lemma) return a.pair->latin_lemma < b.pair->latin_lemma;
  return source_priority(a.pair->source) < source_priority(b.pair->source);
}

struct SentenceResult {
  std::vector<AlignedRow> rows;
  std::vector<SkipRecord> skips;
  std::vector<std::string> notes;
};

}  // namespace detail

/// Lexicon rows grouped by Occitan lemma, each group ordered by source
/// priority (DOM > LoCodi > Croisade > Other) then file order.
class LexiconIndex {
 public:
  explicit LexiconIndex(const std::vector<LemmaPair>& lexicon) : lexicon_(lexicon) {
    for (const auto& p : lexicon_) by_lemma_[p.occitan_lemma].push_back(&p);
    for (auto& [_, group] : by_lemma_)
      std::stable_sort(group.begin(), group.end(), [](const LemmaPair* a, const LemmaPair* b) {
        return source_priority(a->source) < source_priority(b->source);
      });
  }

  const std::vector<const LemmaPair*>* exact(const std::string& lemma) const {
    auto it = by_lemma_.find(lemma);
    return it == by_lemma_.end() ? nullptr : &it->second;
  }

  const std::vector<LemmaPair>& pairs() const noexcept { return lexicon_; }

 private:
  const std::vector<LemmaPair>& lexicon_;
  std::map<std::string, std::vector<const LemmaPair*>> by_lemma_;
};

inline detail::SentenceResult align_sentence(const TaggedSentence& s, std::size_t sentence_index,
                                             const LexiconIndex& index, const SimilarityConfig& cfg,
                                             const VectorTable* vectors) {
  detail::SentenceResult out;
  for (std::size_t t = 0; t < s.tokens.size(); ++t) {
    const auto& tok = s.tokens[t];
    if (tok.index != t) throw DataError("sentence " + s.sent_id + ": token indices not contiguous");
    if (tok.pos != Pos::NOUN) continue;
    const std::string& lemma = tok.norm;

    if (const auto* group = index.exact(lemma)) {
      const LemmaPair* chosen = group->front();
      bool conflict = false;
      for (const auto* p : *group)
        conflict |= p->occitan_gender != chosen->occitan_gender || p->latin_lemma != chosen->latin_lemma ||
                    p->latin_gender != chosen->latin_gender;
      if (conflict)
        out.notes.push_back("homograph '" + lemma + "' has " + std::to_string(group->size()) +
                            " lexicon entries; using " + std::string(to_string(chosen->source)) + " entry " +
                            chosen->latin_lemma);
      out.rows.push_back({chosen->occitan_lemma, sentence_index, s.sent_id, t, chosen->latin_lemma,
                          chosen->occitan_gender, chosen->latin_gender, MatchKind::EXACT, 1.0});
      continue;
    }

    const std::size_t len = text::length(lemma);
    detail::Candidate best;
    for (const auto& p : index.pairs()) {
      if (cfg.length_prefilter) {
        const std::size_t plen = text::length(p.occitan_lemma);
        if ((plen > len ? plen - len : len - plen) > 3) continue;
      }
      detail::Candidate c{&p, sim(lemma, p.occitan_lemma, cfg, vectors), lev_sim(lemma, p.occitan_lemma)};
      if (detail::better(c, best)) best = c;
    }
    if (best.pair && best.sim >= cfg.tau) {
      out.rows.push_back({best.pair->occitan_lemma, sentence_index, s.sent_id, t, best.pair->latin_lemma,
                          best.pair->occitan_gender, best.pair->latin_gender, MatchKind::FUZZY, best.sim});
    } else {
      out.skips.push_back({s.sent_id, t, tok.surface, best.pair ? best.pair->occitan_lemma : "",
                           best.pair ? best.sim : 0.0});
    }
  }
  return out;
}

/// Aligns every NOUN token. Rows follow corpus order; the Occitan lemma used
/// for matching is the token's normalized surface.
inline AlignmentResult build_table(const std::vector<TaggedSentence>& corpus, const std::vector<LemmaPair>& lexicon,
                                   const SimilarityConfig& cfg = {}, const VectorTable* vectors = nullptr,
                                   unsigned jobs = 1) {
  cfg.validate();
  LexiconIndex index(lexicon);
  std::vector<detail::SentenceResult> parts(corpus.size());
  parallel_for(corpus.size(), jobs,
               [&](std::size_t i) { parts[i] = align_sentence(corpus[i], i, index, cfg, vectors); });
  AlignmentResult result;
  for (auto& p : parts) {
    std::move(p.rows.begin(), p.rows.end(), std::back_inserter(result.rows));
    std::move(p.skips.begin(), p.skips.end(), std::back_inserter(result.skips));
    for (auto& n : p.notes) result.diagnostics.note(std::move(n));
  }
  return result;
}

// ---------------------------------------------------------------------------
// TSV formats

inline const std::string kAlignedHeader =
    "occitan_lemma\tsent_id\tnoun_index\tlatin_lemma\toccitan_gender\tlatin_gender\tmatch_kind\tsimilarity";
inline const std::string kSkipHeader = "sent_id\tnoun_index\tsurface\tbest_candidate\tbest_similarity";

inline std::string format_aligned_row(const AlignedRow& r) {
  return r.occitan_lemma + '\t' + r.sent_id + '\t' + std::to_string(r.noun_index) + '\t' + r.latin_lemma + '\t' +
         std::string(to_string(r.occitan_gender)) + '\t' + std::string(to_string(r.latin_gender)) + '\t' +
         std::string(to_string(r.match_kind)) + '\t' + io::fixed(r.similarity, 6);
}

inline std::string format_table(const std::vector<AlignedRow>& rows) {
  std::string out = kAlignedHeader + "\n";
  for (const auto& r : rows) out += format_aligned_row(r) + "\n";
  return out;
}

inline std::string format_skips(const std::vector<SkipRecord>& skips) {
  std::string out = kSkipHeader + "\n";
  for (const auto& s : skips)
    out += s.sent_id + '\t' + std::to_string(s.noun_index) + '\t' + s.surface + '\t' + s.best_candidate + '\t' +
           io::fixed(s.best_similarity, 6) + "\n";
  return out;
}

}  // namespace occ
