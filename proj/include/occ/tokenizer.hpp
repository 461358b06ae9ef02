#pragma once

// Corpus-trained BPE with an optional whole-word fallback ("hybrid"), plus
// OOV rate and masked-subword recovery evaluation.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "occ/common.hpp"
#include "occ/io.hpp"
#include "occ/text.hpp"

namespace occ {

inline const std::string kUnkSymbol = "[UNK]";
inline const std::string kMaskSymbol = "[MASK]";
inline const std::string kBoundaryMarker = "</w>";

enum class TokenPolicy { BPE_ONLY, HYBRID };

struct MergeRule {
  std::string left;
  std::string right;
  std::size_t rank = 0;

  std::string merged() const { return left + right; }
  friend bool operator==(const MergeRule&, const MergeRule&) = default;
};

class SubwordModel {
 public:
  SubwordModel() = default;

  /// Builds a model from its serializable parts. The boundary marker is
  /// always part of the alphabet.
  SubwordModel(std::set<std::string> alphabet, std::vector<MergeRule> merges, TokenPolicy policy,
               std::string unk = kUnkSymbol, std::string marker = kBoundaryMarker)
      : alphabet_(std::move(alphabet)),
        merges_(std::move(merges)),
        policy_(policy),
        unk_(std::move(unk)),
        marker_(std::move(marker)) {
    alphabet_.insert(marker_);
    vocab_ = alphabet_;
    for (std::size_t r = 0; r < merges_.size(); ++r) {
      if (merges_[r].rank != r) throw LoadError("merge ranks must be contiguous from 0");
      ranks_.emplace(std::make_pair(merges_[r].left, merges_[r].right), r);
      vocab_.insert(merges_[r].merged());
    }
  }

  const std::set<std::string>& alphabet() const noexcept { return alphabet_; }
  const std::vector<MergeRule>& merges() const noexcept { return merges_; }
  const std::set<std::string>& vocab() const noexcept { return vocab_; }
  TokenPolicy policy() const noexcept { return policy_; }
  const std::string& unk_symbol() const noexcept { return unk_; }
  const std::string& boundary_marker() const noexcept { return marker_; }

  SubwordModel with_policy(TokenPolicy p) const {
    SubwordModel m = *this;
    m.policy_ = p;
    return m;
  }

  /// Segments one normalized word. Merges apply lowest rank first. Under
  /// BPE_ONLY an out-of-alphabet character turns the whole word into
  /// [unk]; under HYBRID such a word is emitted whole instead.
  std::vector<std::string> encode(std::string_view word) const {
    std::vector<std::string> syms = text::chars(word);
    if (syms.empty()) return {};
    for (const auto& s : syms) {
      if (!alphabet_.count(s) || s == marker_) {
        if (policy_ == TokenPolicy::HYBRID) return {std::string(word)};
        return {unk_};
      }
    }
    while (syms.size() > 1) {
      std::size_t best_rank = SIZE_MAX, best_at = 0;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = ranks_.find({syms[i], syms[i + 1]});
        if (it != ranks_.end() && it->second < best_rank) best_rank = it->second, best_at = i;
      }
      if (best_rank == SIZE_MAX) break;
      syms[best_at] += syms[best_at + 1];
      syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(best_at) + 1);
    }
    return syms;
  }

  bool contains_unk(const std::vector<std::string>& pieces) const {
    return std::find(pieces.begin(), pieces.end(), unk_) != pieces.end();
  }

  /// Inverse of encode for words without [unk]: concatenation minus markers.
  std::string decode(const std::vector<std::string>& pieces) const {
    std::string out;
    for (const auto& p : pieces)
      if (p != marker_) out += p;
    return out;
  }

 private:
  std::set<std::string> alphabet_;
  std::vector<MergeRule> merges_;
  std::set<std::string> vocab_;
  std::map<std::pair<std::string, std::string>, std::size_t> ranks_;
  TokenPolicy policy_ = TokenPolicy::BPE_ONLY;
  std::string unk_ = kUnkSymbol;
  std::string marker_ = kBoundaryMarker;
};

/// Splits corpus lines into words (whitespace only; lines are expected to
/// be normalized already).
inline std::vector<std::string> corpus_words(const std::vector<std::string>& corpus) {
  std::vector<std::string> words;
  for (const auto& line : corpus)
    for (auto& w : text::split_ws(line)) words.push_back(std::move(w));
  return words;
}

/// Greedy BPE training. Each step merges the adjacent pair with the highest
/// corpus frequency (ties: lexicographically smallest (left, right)). Pairs
/// seen fewer than twice, or whose concatenation is already a vocabulary
/// entry, are not merged. Training stops at vocab_size or when nothing is
/// left to merge. Merges never cross word boundaries.
inline SubwordModel train_bpe(const std::vector<std::string>& corpus, std::size_t vocab_size,
                              TokenPolicy policy = TokenPolicy::BPE_ONLY) {
  std::map<std::string, std::size_t> word_freq;
  for (auto& w : corpus_words(corpus)) ++word_freq[w];
  if (word_freq.empty()) throw PreconditionError("empty training corpus");

  // Symbol interning keeps the pair counting on integers.
  std::vector<std::string> id_to_sym;
  std::unordered_map<std::string, std::uint32_t> sym_to_id;
  auto intern = [&](const std::string& s) {
    auto [it, fresh] = sym_to_id.emplace(s, static_cast<std::uint32_t>(id_to_sym.size()));
    if (fresh) id_to_sym.push_back(s);
    return it->second;
  };

  std::set<std::string> alphabet{kBoundaryMarker};
  std::vector<std::vector<std::uint32_t>> words;
  std::vector<std::size_t> freqs;
  for (const auto& [w, f] : word_freq) {
    std::vector<std::uint32_t> ids;
    for (auto& c : text::chars(w)) {
      alphabet.insert(c);
      ids.push_back(intern(c));
    }
    words.push_back(std::move(ids));
    freqs.push_back(f);
  }
  if (vocab_size < alphabet.size())
    throw PreconditionError("vocab_size " + std::to_string(vocab_size) +
                            " is smaller than the alphabet (" + std::to_string(alphabet.size()) + ")");

  std::set<std::string> vocab = alphabet;
  std::vector<MergeRule> merges;
  auto key = [](std::uint32_t a, std::uint32_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  };

  while (vocab.size() < vocab_size) {
    std::unordered_map<std::uint64_t, std::size_t> pair_freq;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& ids = words[w];
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) pair_freq[key(ids[i], ids[i + 1])] += freqs[w];
    }
    std::size_t best_f = 0;
    std::uint32_t best_a = 0, best_b = 0;
    for (const auto& [k, f] : pair_freq) {
      if (f < 2 || f < best_f) continue;
      const auto a = static_cast<std::uint32_t>(k >> 32);
      const auto b = static_cast<std::uint32_t>(k & 0xffffffffu);
      if (vocab.count(id_to_sym[a] + id_to_sym[b])) continue;
      if (f > best_f ||
          std::tie(id_to_sym[a], id_to_sym[b]) < std::tie(id_to_sym[best_a], id_to_sym[best_b])) {
        best_f = f, best_a = a, best_b = b;
      }
    }
    if (best_f == 0) break;

    const std::string merged = id_to_sym[best_a] + id_to_sym[best_b];
    const std::uint32_t merged_id = intern(merged);
    merges.push_back({id_to_sym[best_a], id_to_sym[best_b], merges.size()});
    vocab.insert(merged);
    for (auto& ids : words) {
      if (ids.size() < 2) continue;
      std::vector<std::uint32_t> next;
      next.reserve(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i + 1 < ids.size() && ids[i] == best_a && ids[i + 1] == best_b) {
          next.push_back(merged_id);
          ++i;
        } else {
          next.push_back(ids[i]);
        }
      }
      ids.swap(next);
    }
  }
  return SubwordModel(std::move(alphabet), std::move(merges), policy);
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string_view to_string(TokenPolicy p) {
  return p == TokenPolicy::HYBRID ? "hybrid" : "bpe";
}

inline TokenPolicy parse_policy(std::string_view s) {
  if (s == "bpe") return TokenPolicy::BPE_ONLY;
  if (s == "hybrid") return TokenPolicy::HYBRID;
  throw PreconditionError("policy must be bpe or hybrid, got '" + std::string(s) + "'");
}

inline nlohmann::json to_json(const SubwordModel& m) {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& r : m.merges()) merges.push_back({r.left, r.right});
  nlohmann::json alphabet = nlohmann::json::array();
  for (const auto& c : m.alphabet()) alphabet.push_back(c);
  return {{"alphabet", alphabet},
          {"merges", merges},
          {"policy", to_string(m.policy())},
          {"unk_symbol", m.unk_symbol()},
          {"boundary_marker", m.boundary_marker()}};
}

inline SubwordModel model_from_json(const nlohmann::json& j) {
  try {
    std::set<std::string> alphabet;
    for (const auto& c : j.at("alphabet")) alphabet.insert(c.get<std::string>());
    std::vector<MergeRule> merges;
    for (const auto& m : j.at("merges")) {
      if (!m.is_array() || m.size() != 2) throw LoadError("merge entries must be [left, right]");
      merges.push_back({m[0].get<std::string>(), m[1].get<std::string>(), merges.size()});
    }
    return SubwordModel(std::move(alphabet), std::move(merges),
                        parse_policy(j.at("policy").get<std::string>()),
                        j.at("unk_symbol").get<std::string>(),
                        j.at("boundary_marker").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("model file: ") + e.what());
  }
}

inline std::string serialize_model(const SubwordModel& m) { return to_json(m).dump(2) + "\n"; }

inline SubwordModel load_model(const std::filesystem::path& path) {
  try {
    return model_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(std::string("model file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Evaluation

struct TokenizationReport {
  double oov_rate = 0.0;
  double masked_recovery = 0.0;
  std::size_t token_count = 0;
  std::size_t unk_count = 0;
  std::size_t masked_positions = 0;
};

/// Fraction of word tokens whose encoding contains [unk].
inline double oov_rate(const SubwordModel& model, const std::vector<std::string>& words,
                       std::size_t* unk_count = nullptr) {
  if (words.empty()) throw PreconditionError("empty token stream");
  std::size_t unk = 0;
  for (const auto& w : words)
    if (model.contains_unk(model.encode(w))) ++unk;
  if (unk_count) *unk_count = unk;
  return static_cast<double>(unk) / static_cast<double>(words.size());
}

/// One evaluation item: a subword sequence with the index of the masked piece.
struct MaskedItem {
  std::vector<std::string> pieces;
  std::size_t position = 0;
};

/// Given the sequence with [MASK] at `position`, returns candidates, best first.
using MaskedScorer =
    std::function<std::vector<std::string>(const std::vector<std::string>& masked, std::size_t position)>;

/// Top-1 accuracy at masked positions. A held-out [unk] is never counted as
/// recovered.
inline double masked_recovery(const SubwordModel& model, const MaskedScorer& scorer,
                              const std::vector<MaskedItem>& eval_set) {
  if (eval_set.empty()) throw PreconditionError("empty masked evaluation set");
  std::size_t hits = 0;
  for (const auto& item : eval_set) {
    if (item.position >= item.pieces.size()) throw PreconditionError("masked position out of range");
    const std::string& gold = item.pieces[item.position];
    auto masked = item.pieces;
    masked[item.position] = kMaskSymbol;
    auto ranked = scorer(masked, item.position);
    if (!ranked.empty() && ranked.front() == gold && gold != model.unk_symbol()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(eval_set.size());
}

/// Context-free baseline: always proposes subwords by descending corpus
/// frequency (ties lexicographic). [unk] is never proposed.
class UnigramScorer {
 public:
  UnigramScorer(const SubwordModel& model, const std::vector<std::string>& words) {
    std::map<std::string, std::size_t> counts;
    for (const auto& w : words)
      for (auto& p : model.encode(w))
        if (p != model.unk_symbol()) ++counts[p];
    ranked_.reserve(counts.size());
    for (auto& [s, c] : counts) ranked_.emplace_back(c, s);
    std::stable_sort(ranked_.begin(), ranked_.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
  }

  std::vector<std::string> operator()(const std::vector<std::string>&, std::size_t) const {
    std::vector<std::string> out;
    out.reserve(std::min<std::size_t>(ranked_.size(), 10));
    for (std::size_t i = 0; i < ranked_.size() && i < 10; ++i) out.push_back(ranked_[i].second);
    return out;
  }

 private:
  std::vector<std::pair<std::size_t, std::string>> ranked_;
};

/// Every subword position of every line, with the line encoded as one
/// sequence (word pieces concatenated in order).
inline std::vector<MaskedItem> masked_eval_set(const SubwordModel& model,
                                               const std::vector<std::string>& lines) {
  std::vector<MaskedItem> items;
  for (const auto& line : lines) {
    std::vector<std::string> seq;
    for (const auto& w : text::split_ws(line))
      for (auto& p : model.encode(w)) seq.push_back(std::move(p));
    for (std::size_t i = 0; i < seq.size(); ++i) items.push_back({seq, i});
  }
  return items;
}

inline TokenizationReport evaluate_tokenizer(const SubwordModel& model,
                                             const std::vector<std::string>& lines,
                                             const std::vector<std::string>& scorer_corpus) {
  TokenizationReport r;
  auto words = corpus_words(lines);
  r.token_count = words.size();
  r.oov_rate = oov_rate(model, words, &r.unk_count);
  UnigramScorer scorer(model, corpus_words(scorer_corpus));
  auto items = masked_eval_set(model, lines);
  r.masked_positions = items.size();
  r.masked_recovery = items.empty() ? 0.0 : masked_recovery(model, std::cref(scorer), items);
  return r;
}

inline nlohmann::json to_json(const TokenizationReport& r) {
  return {{"oov_rate", r.oov_rate},
          {"masked_recovery", r.masked_recovery},
          {"token_count", r.token_count},
          {"unk_count", r.unk_count},
          {"masked_positions", r.masked_positions}};
}

}  // namespace occ
