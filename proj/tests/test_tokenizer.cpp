#include <gtest/gtest.h>

#include "occ/rng.hpp"
#include "occ/tokenizer.hpp"

using namespace occ;

namespace {

// Straightforward BPE over explicit token lists, one list per word
// occurrence, ordered map for the lexicographic tie-break.
std::vector<std::pair<std::string, std::string>> naive_bpe(const std::vector<std::string>& words,
                                                           std::size_t vocab_size) {
  std::vector<std::vector<std::string>> seqs;
  std::set<std::string> vocab{kBoundaryMarker};
  for (const auto& w : words) {
    seqs.push_back(text::chars(w));
    for (auto& c : seqs.back()) vocab.insert(c);
  }
  std::vector<std::pair<std::string, std::string>> merges;
  while (vocab.size() < vocab_size) {
    std::map<std::pair<std::string, std::string>, int> counts;
    for (const auto& s : seqs)
      for (std::size_t i = 0; i + 1 < s.size(); ++i) ++counts[{s[i], s[i + 1]}];
    std::pair<std::string, std::string> best;
    int best_f = 0;
    for (const auto& [p, f] : counts)
      if (f >= 2 && f > best_f && !vocab.count(p.first + p.second)) best = p, best_f = f;
    if (best_f == 0) break;
    merges.push_back(best);
    vocab.insert(best.first + best.second);
    for (auto& s : seqs) {
      std::vector<std::string> out;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == best.first && s[i + 1] == best.second) {
          out.push_back(best.first + best.second);
          ++i;
        } else {
          out.push_back(s[i]);
        }
      }
      s = out;
    }
  }
  return merges;
}

std::string random_word(Rng& rng, const std::u32string& pool, std::size_t max_len) {
  std::u32string w;
  const auto n = 1 + rng.below(max_len);
  for (std::size_t i = 0; i < n; ++i) w.push_back(pool[rng.below(pool.size())]);
  return text::to_utf8(w);
}

}  // namespace

TEST(Bpe, FirstMergeOnThreeWordFixture) {
  // Alphabet {a, b, marker}; one merge allowed. f(a,a) = 2 > f(a,b) = 1.
  auto m = train_bpe({"aa", "aa", "ab"}, 4);
  ASSERT_EQ(m.merges().size(), 1u);
  EXPECT_EQ(m.merges()[0], (MergeRule{"a", "a", 0}));
  EXPECT_TRUE(m.vocab().count("aa"));
  EXPECT_EQ(m.vocab().size(), 4u);
}

TEST(Bpe, NothingToMerge) {
  auto m = train_bpe({"a"}, 2);
  EXPECT_TRUE(m.merges().empty());
}

TEST(Bpe, FirstMergeDependsOnFrequency) {
  EXPECT_EQ(train_bpe({"ab", "ab"}, 4).merges()[0].merged(), "ab");
  EXPECT_EQ(train_bpe({"ba", "ba"}, 4).merges()[0].merged(), "ba");
}

TEST(Bpe, VocabBelowAlphabetIsError) { EXPECT_THROW(train_bpe({"abc"}, 2), PreconditionError); }

TEST(Bpe, MatchesNaiveTrainer) {
  Rng rng(3, "bpe-oracle");
  const std::u32string pool = U"abcdé";
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::string> words;
    const auto n = 5 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) words.push_back(random_word(rng, pool, 6));
    const std::size_t vs = 8 + rng.below(20);
    auto m = train_bpe({io::join(words, " ")}, vs);
    auto oracle = naive_bpe(words, vs);
    ASSERT_EQ(m.merges().size(), oracle.size()) << "trial " << trial;
    for (std::size_t r = 0; r < oracle.size(); ++r) {
      EXPECT_EQ(m.merges()[r].left, oracle[r].first);
      EXPECT_EQ(m.merges()[r].right, oracle[r].second);
    }
    EXPECT_LE(m.vocab().size(), vs);
  }
}

TEST(Encode, EmptyMergesFallsBackToCharacters) {
  SubwordModel m({"a", "b"}, {}, TokenPolicy::BPE_ONLY);
  EXPECT_EQ(m.encode("ab"), (std::vector<std::string>{"a", "b"}));
}

TEST(Encode, PolicyDecidesUnknownCharacters) {
  auto m = train_bpe({"ab", "ba"}, 3);
  EXPECT_EQ(m.encode("c"), std::vector<std::string>{kUnkSymbol});
  EXPECT_EQ(m.with_policy(TokenPolicy::HYBRID).encode("c"), std::vector<std::string>{"c"});
  EXPECT_EQ(m.with_policy(TokenPolicy::HYBRID).encode("ab"), (std::vector<std::string>{"a", "b"}));
}

TEST(Encode, AppliesMergesByRank) {
  auto m = train_bpe({"abab abab abab"}, 6);
  EXPECT_EQ(m.encode("abab"), std::vector<std::string>{"abab"});
  EXPECT_EQ(m.encode("aba"), (std::vector<std::string>{"ab", "a"}));
}

TEST(Oov, HandFixture) {
  SubwordModel m({"a", "b"}, {}, TokenPolicy::BPE_ONLY);
  EXPECT_DOUBLE_EQ(oov_rate(m, {"aa", "cc"}), 0.5);
  EXPECT_DOUBLE_EQ(oov_rate(m.with_policy(TokenPolicy::HYBRID), {"aa", "cc"}), 0.0);
}

TEST(Oov, ZeroOnTrainingCorpus) {
  std::vector<std::string> corpus{"lo rei de fransa", "la reina e lo comte"};
  auto m = train_bpe(corpus, 30);
  EXPECT_DOUBLE_EQ(oov_rate(m, corpus_words(corpus)), 0.0);
}

TEST(Properties, HybridNeverUnkAndRoundTrips) {
  auto bpe = train_bpe({"lo rei de fransa la reina e lo comte de tolosa"}, 40);
  auto hybrid = bpe.with_policy(TokenPolicy::HYBRID);
  Rng rng(5, "tok-prop");
  const std::u32string pool = U"aeiolrstnéç中Ж\U0001F600xq";
  std::vector<std::string> words;
  for (int i = 0; i < 2000; ++i) words.push_back(random_word(rng, pool, 8));
  EXPECT_DOUBLE_EQ(oov_rate(hybrid, words), 0.0);
  for (const auto& w : words) {
    EXPECT_EQ(hybrid.decode(hybrid.encode(w)), w);
    auto pieces = bpe.encode(w);
    if (!bpe.contains_unk(pieces)) {
      EXPECT_EQ(bpe.decode(pieces), w);
    }
  }
}

TEST(Serialization, RoundTrip) {
  auto m = train_bpe({"festa festum festas tempus temps"}, 25, TokenPolicy::HYBRID);
  auto again = model_from_json(nlohmann::json::parse(serialize_model(m)));
  EXPECT_EQ(again.merges(), m.merges());
  EXPECT_EQ(again.alphabet(), m.alphabet());
  EXPECT_EQ(again.policy(), TokenPolicy::HYBRID);
  EXPECT_EQ(serialize_model(again), serialize_model(m));
}

TEST(Serialization, RejectsBadFile) {
  EXPECT_THROW(model_from_json(nlohmann::json::parse(R"({"alphabet":["a"]})")), LoadError);
  EXPECT_THROW(model_from_json(nlohmann::json::parse(
                   R"({"alphabet":["a"],"merges":[["a"]],"policy":"bpe","unk_symbol":"[UNK]","boundary_marker":"</w>"})")),
               LoadError);
}

TEST(MaskedRecovery, OracleAndConstantScorers) {
  SubwordModel m({"a", "b", "c"}, {}, TokenPolicy::BPE_ONLY);
  auto items = masked_eval_set(m, {"abc", "cab"});
  ASSERT_EQ(items.size(), 6u);
  std::size_t k = 0;
  MaskedScorer oracle = [&](const std::vector<std::string>&, std::size_t pos) -> std::vector<std::string> {
    return {items[k++].pieces[pos]};
  };
  EXPECT_DOUBLE_EQ(masked_recovery(m, oracle, items), 1.0);
  MaskedScorer wrong = [](const std::vector<std::string>&, std::size_t) -> std::vector<std::string> { return {"zz"}; };
  EXPECT_DOUBLE_EQ(masked_recovery(m, wrong, items), 0.0);
}

TEST(MaskedRecovery, UnigramBaselineHandCount) {
  // "a" is the most frequent subword; it is the gold answer at 1 of 4 positions.
  SubwordModel m({"a", "b", "c"}, {}, TokenPolicy::BPE_ONLY);
  UnigramScorer scorer(m, {"a", "a", "a", "b", "c"});
  auto items = masked_eval_set(m, {"abcb"});
  EXPECT_DOUBLE_EQ(masked_recovery(m, std::cref(scorer), items), 0.25);
}

TEST(MaskedRecovery, MaskedUnkNeverCounts) {
  SubwordModel m({"a"}, {}, TokenPolicy::BPE_ONLY);
  std::vector<MaskedItem> items{{{kUnkSymbol}, 0}};
  MaskedScorer says_unk = [](const std::vector<std::string>&, std::size_t) -> std::vector<std::string> {
    return {kUnkSymbol};
  };
  EXPECT_DOUBLE_EQ(masked_recovery(m, says_unk, items), 0.0);
}
