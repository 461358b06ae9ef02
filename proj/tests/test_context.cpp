#include <gtest/gtest.h>

#include <cmath>

#include "occ/context.hpp"
#include "occ/synthetic.hpp"

using namespace occ;

namespace {

TaggedSentence sentence(const std::string& id, const std::vector<std::pair<std::string, Pos>>& toks) {
  TaggedSentence s{id, {}};
  for (std::size_t i = 0; i < toks.size(); ++i) s.tokens.push_back({toks[i].first, toks[i].first, toks[i].second, i});
  return s;
}

ContextInstance instance(const TaggedSentence& s, std::size_t i, OccGender y = OccGender::F) {
  return {s, i, s.tokens[i].norm, "casa", LatinGender::F, y, s.tokens[i].norm};
}

std::vector<ContextInstance> synthetic_instances(std::size_t sentences, std::size_t lemmas, std::uint64_t seed) {
  auto syn = make_synthetic_corpus({sentences, lemmas, seed});
  return make_instances(syn.corpus, build_table(syn.corpus, syn.lexicon).rows);
}

const auto kSentence = sentence("s1", {{"e", Pos::CCONJ}, {"vic", Pos::VERB}, {"la", Pos::DET}, {"bela", Pos::ADJ},
                                        {"casa", Pos::NOUN}, {"de", Pos::ADP}, {"pèire", Pos::NOUN}, {".", Pos::PUNCT}});

}  // namespace

TEST(Represent, WindowOneIncludesDeterminer) {
  auto s = sentence("s", {{"la", Pos::DET}, {"casa", Pos::NOUN}});
  EncoderSpec enc;
  enc.window = 1;
  auto fv = represent(instance(s, 1), Mode::CONTEXT, enc);
  EXPECT_EQ(fv.blocks.at("context").count("L1:la"), 1u);
  EXPECT_EQ(fv.blocks.at("context").count("T:casa"), 1u);
}

TEST(Represent, WordOnlyIgnoresSentence) {
  EncoderSpec enc;
  auto base = represent(instance(kSentence, 4), Mode::WORD_ONLY, enc).flatten();
  Rng rng(1, "edit");
  for (int trial = 0; trial < 50; ++trial) {
    auto s = kSentence;
    for (std::size_t t = 0; t < s.tokens.size(); ++t)
      if (t != 4 && rng.coin()) s.tokens[t].norm = "w" + std::to_string(rng.below(100));
    std::swap(s.tokens[0].norm, s.tokens[s.tokens.size() - 1].norm);
    EXPECT_EQ(represent(instance(s, 4), Mode::WORD_ONLY, enc).flatten(), base);
  }
  EXPECT_EQ(base.count("context/T:casa"), 0u);
}

TEST(Represent, MaskedIgnoresTargetIdentity) {
  EncoderSpec enc;
  auto a = represent(instance(kSentence, 4), Mode::MASKED, enc);
  auto other = kSentence;
  other.tokens[4].norm = "ostal";
  auto in = instance(other, 4);
  auto b = represent(in, Mode::MASKED, enc);
  EXPECT_EQ(a.blocks.at("context"), b.blocks.at("context"));
  for (const auto& [name, v] : a.blocks.at("context")) {
    if (name.rfind("T:", 0) == 0) {
      EXPECT_EQ(name, "T:[MASK]");
    }
    EXPECT_EQ(name.find("casa"), std::string::npos);
  }
  EXPECT_EQ(a.blocks.count("word"), 0u);
}

TEST(Represent, OccludingOutsideWindowChangesNothing) {
  EncoderSpec enc;
  enc.window = 2;
  auto in = instance(kSentence, 4);
  const auto full = represent(in, Mode::CONTEXT, enc);
  EXPECT_EQ(represent(in, Mode::CONTEXT, enc, 0).flatten(), full.flatten());  // offset -4
  EXPECT_EQ(represent(in, Mode::CONTEXT, enc, 7).flatten(), full.flatten());  // offset +3
  EXPECT_NE(represent(in, Mode::CONTEXT, enc, 3).flatten(), full.flatten());
  EXPECT_EQ(represent(in, Mode::CONTEXT, enc, 3).blocks.at("context").count("L1:[MASK]"), 1u);
}

TEST(Represent, VectorFileKeys) {
  VectorTable t(2);
  t.add("s1:4:ctx", {0.5, -1.0});
  EncoderSpec enc{EncoderKind::VECTOR_FILE, 3, "[MASK]", &t};
  auto fv = represent(instance(kSentence, 4), Mode::CONTEXT, enc);
  EXPECT_EQ(fv.blocks.at("encoder").at("h_1"), -1.0);
  EXPECT_THROW(represent(instance(kSentence, 4), Mode::MASKED, enc), DataError);
}

TEST(Instance, Validation) {
  auto bad = instance(kSentence, 2);  // DET
  EXPECT_THROW(bad.validate(), DataError);
  auto in = instance(kSentence, 4);
  in.occitan_word = "other";
  EXPECT_THROW(in.validate(), DataError);
}

TEST(Deltas, ArithmeticFixture) {
  std::vector<InstanceDelta> d{{"a", 0.6, 0.9, 0.8}};
  auto r = summarize_deltas(d, 100, 1);
  EXPECT_NEAR(r.d1_prob.mean, 0.3, 1e-12);
  EXPECT_NEAR(r.d2_prob.mean, 0.2, 1e-12);
  EXPECT_NEAR(r.d1_logp.mean, std::log(0.9 / 0.6), 1e-12);
  EXPECT_NEAR(r.d2_logp.mean, std::log(0.8 / 0.6), 1e-12);
  EXPECT_EQ(r.d1_prob.n, 1u);
}

TEST(Deltas, ClipsZeroProbabilities) {
  std::vector<InstanceDelta> d{{"a", 0.0, 0.5, 0.5}, {"b", 0.5, 0.5, 0.5}};
  Diagnostics diag;
  auto r = summarize_deltas(d, 100, 1, 1, &diag);
  EXPECT_EQ(r.clipped, 1u);
  EXPECT_TRUE(std::isfinite(r.d1_logp.mean));
  EXPECT_NEAR(d[0].d1_log, std::log(0.5) - std::log(1e-12), 1e-9);
  EXPECT_FALSE(diag.empty());
}

TEST(Induction, IdenticalEncodersGiveZeroDeltas) {
  auto instances = synthetic_instances(120, 30, 3);
  VectorTable t(2);
  Rng rng(2, "vecs");
  for (const auto& in : instances) {
    std::vector<double> v{rng.normal(), rng.normal()};
    for (Mode m : kAllModes) t.add(vector_key(in.sentence.sent_id, in.noun_index, m), v);
  }
  EncoderSpec enc{EncoderKind::VECTOR_FILE, 3, "[MASK]", &t};
  auto r = run_induction(instances, enc, {}, {3, 13, 200, 1});
  EXPECT_EQ(r.report.d1_prob.mean, 0.0);
  EXPECT_EQ(r.report.d2_prob.mean, 0.0);
  EXPECT_EQ(r.report.d1_logp.mean, 0.0);
  EXPECT_EQ(r.report.d2_logp.mean, 0.0);
}

TEST(Induction, SyntheticContextHelps) {
  auto instances = synthetic_instances(600, 120, 5);
  EncoderSpec enc;
  auto r = run_induction(instances, enc, {}, {3, 13, 500, 2});
  EXPECT_GT(r.cv[1].mean_accuracy, r.cv[0].mean_accuracy + 0.3);
  EXPECT_GT(r.report.d1_prob.ci_low, 0.0);
  EXPECT_LE(r.report.d1_prob.ci_low, r.report.d1_prob.mean);
  EXPECT_GE(r.report.d1_prob.ci_high, r.report.d1_prob.mean);

  // Stored per-instance deltas reproduce the report means.
  double s1 = 0, s2 = 0;
  for (const auto& d : r.deltas) {
    EXPECT_EQ(d.d1, d.p_ctx - d.p_word);
    s1 += d.d1, s2 += d.d2;
  }
  EXPECT_NEAR(s1 / r.deltas.size(), r.report.d1_prob.mean, 1e-12);
  EXPECT_NEAR(s2 / r.deltas.size(), r.report.d2_prob.mean, 1e-12);

  OcclusionConfig oc{2000, 13, 2};
  auto occ = pos_occlusion(instances, enc, r, oc);
  ASSERT_TRUE(occ.top_non_noun().has_value());
  EXPECT_EQ(*occ.top_non_noun(), Pos::DET);
  EXPECT_LT(occ.per_tag.at(Pos::DET).p_value, 0.01);
  for (const auto& t : occ.tokens) {
    const auto& in = *std::find_if(instances.begin(), instances.end(), [&](const auto& x) { return x.id() == t.instance_id; });
    const auto off = t.token_index > in.noun_index ? t.token_index - in.noun_index : in.noun_index - t.token_index;
    if (off > enc.window) {
      EXPECT_EQ(t.delta, 0.0);
    }
  }
}

TEST(Occlusion, ScheduleIndependent) {
  auto instances = synthetic_instances(150, 40, 9);
  EncoderSpec enc;
  auto r = run_induction(instances, enc, {}, {3, 13, 100, 1});
  auto a = pos_occlusion(instances, enc, r, {500, 13, 1});
  auto b = pos_occlusion(instances, enc, r, {500, 13, 4});
  EXPECT_EQ(format_occlusion(a.tokens), format_occlusion(b.tokens));
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(InstanceTable, RoundTripWithGold) {
  std::vector<InstanceRow> rows{{{"casa", 0, "s1", 4, "casa", OccGender::F, LatinGender::F, MatchKind::EXACT, 1.0}, OccGender::M}};
  auto back = parse_instance_table(format_instance_table(rows));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].gold, OccGender::M);
  EXPECT_EQ(back[0].row.noun_index, 4u);
  auto joined = make_instances({kSentence}, back);
  EXPECT_EQ(joined[0].occitan_word, "casa");
  EXPECT_EQ(joined[0].gold, OccGender::M);
  EXPECT_THROW(make_instances({}, back), DataError);
}

TEST(InstanceTable, GoldDefaultsToOccitanGender) {
  std::vector<AlignedRow> rows{{"casa", 0, "s1", 4, "casa", OccGender::F, LatinGender::F, MatchKind::EXACT, 1.0}};
  auto back = parse_instance_table(format_table(rows));
  EXPECT_EQ(back[0].gold, OccGender::F);
}

TEST(Synthetic, DeterminerEncodesGender) {
  auto syn = make_synthetic_corpus({300, 50, 13});
  EXPECT_EQ(syn.corpus.size(), 300u);
  std::map<std::string, OccGender> gender;
  for (const auto& p : syn.lexicon) gender[p.occitan_lemma] = p.occitan_gender;
  for (const auto& s : syn.corpus)
    for (std::size_t i = 0; i < s.tokens.size(); ++i)
      if (s.tokens[i].pos == Pos::NOUN) {
        std::size_t d = i;
        while (s.tokens[d].pos != Pos::DET) --d;
        EXPECT_EQ(s.tokens[d].norm, gender[s.tokens[i].norm] == OccGender::F ? "la" : "lo");
      }
  EXPECT_EQ(format_tagged_corpus(make_synthetic_corpus({300, 50, 13}).corpus), format_tagged_corpus(syn.corpus));
}
