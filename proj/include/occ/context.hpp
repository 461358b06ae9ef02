#pragma once

// Contextual induction: how much the gold-class probability moves when the
// sentence around a noun is added (CONTEXT) or substituted with the noun
// masked (MASKED), relative to the word alone (WORD_ONLY). Plus per-PoS
// occlusion attribution over a CONTEXT classifier.

#include <cmath>
#include <concepts>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "occ/common.hpp"
#include "occ/corpus.hpp"
#include "occ/evalstats.hpp"
#include "occ/io.hpp"
#include "occ/lexicon.hpp"
#include "occ/model.hpp"
#include "occ/parallel.hpp"
#include "occ/text.hpp"
#include "occ/vectors.hpp"

namespace occ {

struct ContextInstance {
  TaggedSentence sentence;
  std::size_t noun_index = 0;
  std::string occitan_word;
  std::string latin_lemma;
  LatinGender latin_gender = LatinGender::N;
  OccGender gold = OccGender::M;
  std::string lemma_id;

  std::string id() const { return sentence.sent_id + ":" + std::to_string(noun_index); }

  void validate() const {
    if (noun_index >= sentence.tokens.size())
      throw DataError("instance " + id() + ": noun index out of range");
    const auto& t = sentence.tokens[noun_index];
    if (t.pos != Pos::NOUN) throw DataError("instance " + id() + ": target token is not a NOUN");
    if (t.norm != occitan_word) throw DataError("instance " + id() + ": word does not match target token");
  }
};

enum class EncoderKind { BAG_WINDOW, VECTOR_FILE };
enum class Mode { WORD_ONLY, CONTEXT, MASKED };

inline constexpr Mode kAllModes[3] = {Mode::WORD_ONLY, Mode::CONTEXT, Mode::MASKED};

/// Short names, also the mode component of VECTOR_FILE keys.
inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::WORD_ONLY: return "word";
    case Mode::CONTEXT: return "ctx";
    case Mode::MASKED: return "mask";
  }
  return "?";
}

inline std::string vector_key(const std::string& sent_id, std::size_t i, Mode m) {
  return sent_id + ":" + std::to_string(i) + ":" + std::string(to_string(m));
}

struct EncoderSpec {
  EncoderKind kind = EncoderKind::BAG_WINDOW;
  std::size_t window = 3;
  std::string mask_token = "[MASK]";
  const VectorTable* vectors = nullptr;  // VECTOR_FILE only

  void validate() const {
    if (window < 1) throw PreconditionError("window must be >= 1");
    if (kind == EncoderKind::VECTOR_FILE && !vectors) throw PreconditionError("VECTOR_FILE encoder needs a vector table");
  }
};

namespace detail {

inline void add_token_features(FeatureMap& m, const std::string& bucket, const std::string& token) {
  m[bucket + ":" + token] = 1.0;
  const auto n = text::length(token);
  for (std::size_t k = 1; k <= 2 && k < n; ++k) m[bucket + ":suf" + std::to_string(k) + "=" + text::suffix(token, k)] = 1.0;
}

inline void add_lemma_blocks(FeatureVector& fv, const ContextInstance& in) {
  auto& lat = fv.blocks["latin"];
  lat["L=" + in.latin_lemma] = 1.0;
  for (std::size_t k = 1; k <= 3; ++k) lat["suf" + std::to_string(k) + "=" + text::suffix(in.latin_lemma, k)] = 1.0;
  auto& gl = fv.blocks["latin_gender"];
  for (LatinGender g : {LatinGender::M, LatinGender::F, LatinGender::N})
    gl["GL=" + std::string(to_string(g))] = in.latin_gender == g ? 1.0 : 0.0;
}

}  // namespace detail

/// Feature representation of one instance. `occluded`, when set, replaces
/// that token with the mask token before encoding (used by occlusion).
///
/// BAG_WINDOW buckets tokens by offset (L3..L1, T, R1..R3 for window 3),
/// each with identity and short suffix indicators. WORD_ONLY sees only the
/// target word; MASKED encodes the window with the target replaced.
inline FeatureVector represent(const ContextInstance& in, Mode mode, const EncoderSpec& enc,
                               std::optional<std::size_t> occluded = std::nullopt) {
  enc.validate();
  FeatureVector fv;
  detail::add_lemma_blocks(fv, in);

  if (enc.kind == EncoderKind::VECTOR_FILE) {
    if (occluded) throw PreconditionError("occlusion needs the BAG_WINDOW encoder");
    const auto key = vector_key(in.sentence.sent_id, in.noun_index, mode);
    const auto* v = enc.vectors->find(key);
    if (!v) throw DataError("vector file has no entry for key '" + key + "'");
    auto& b = fv.blocks["encoder"];
    for (std::size_t d = 0; d < v->size(); ++d) b["h_" + std::to_string(d)] = (*v)[d];
    return fv;
  }

  if (mode == Mode::WORD_ONLY) {
    auto& b = fv.blocks["word"];
    b["w=" + in.occitan_word] = 1.0;
    for (std::size_t k = 1; k <= 3; ++k) b["suf" + std::to_string(k) + "=" + text::suffix(in.occitan_word, k)] = 1.0;
    return fv;
  }

  auto& b = fv.blocks["context"];
  const auto& toks = in.sentence.tokens;
  const auto i = static_cast<std::ptrdiff_t>(in.noun_index);
  const auto w = static_cast<std::ptrdiff_t>(enc.window);
  for (std::ptrdiff_t d = -w; d <= w; ++d) {
    const std::ptrdiff_t t = i + d;
    if (t < 0 || t >= static_cast<std::ptrdiff_t>(toks.size())) continue;
    const auto ut = static_cast<std::size_t>(t);
    const std::string bucket = d == 0 ? "T" : (d < 0 ? "L" : "R") + std::to_string(d < 0 ? -d : d);
    const bool masked = (d == 0 && mode == Mode::MASKED) || (occluded && *occluded == ut);
    if (masked)
      b[bucket + ":" + enc.mask_token] = 1.0;
    else
      detail::add_token_features(b, bucket, toks[ut].norm);
  }
  return fv;
}

inline Instance to_model_instance(const ContextInstance& in, Mode mode, const EncoderSpec& enc) {
  return {in.id(), represent(in, mode, enc), in.gold, in.lemma_id};
}

// ---------------------------------------------------------------------------
// Induction

struct DeltaStat {
  double mean = 0, ci_low = 0, ci_high = 0;
  std::size_t n = 0;
};

struct DeltaReport {
  DeltaStat d1_prob, d2_prob, d1_logp, d2_logp;
  std::size_t clipped = 0;  // instances with some probability clipped at 1e-12 before the log
};

struct InstanceDelta {
  std::string instance_id;
  double p_word = 0, p_ctx = 0, p_mask = 0;
  double d1 = 0, d2 = 0, d1_log = 0, d2_log = 0;
};

struct InductionConfig {
  std::size_t k = 3;
  std::uint64_t seed = 13;
  std::size_t bootstrap_resamples = 2000;
  unsigned jobs = 1;
};

struct InductionResult {
  FoldPlan plan;
  std::array<CVResult, 3> cv;  // indexed by Mode
  std::vector<InstanceDelta> deltas;
  DeltaReport report;
  std::vector<TrainedModel> context_models;  // per fold
  Diagnostics diagnostics;
};

inline constexpr double kProbFloor = 1e-12;

inline DeltaStat delta_stat(const std::vector<double>& v, std::size_t resamples, std::uint64_t seed,
                            std::string_view name, unsigned jobs) {
  const auto ci = bootstrap_mean_ci(v, resamples, derive_seed(seed, name), 0.95, jobs);
  return {ci.mean, ci.ci_low, ci.ci_high, ci.n};
}

/// Δ statistics from per-instance gold-class probabilities. Log deltas use
/// probabilities clipped below at 1e-12.
inline DeltaReport summarize_deltas(std::vector<InstanceDelta>& deltas, std::size_t resamples, std::uint64_t seed,
                                    unsigned jobs = 1, Diagnostics* diag = nullptr) {
  if (deltas.empty()) throw PreconditionError("no instances");
  DeltaReport r;
  std::vector<double> d1, d2, l1, l2;
  for (auto& d : deltas) {
    const bool clip = d.p_word < kProbFloor || d.p_ctx < kProbFloor || d.p_mask < kProbFloor;
    r.clipped += clip;
    const double lw = std::log(std::max(d.p_word, kProbFloor));
    d.d1 = d.p_ctx - d.p_word;
    d.d2 = d.p_mask - d.p_word;
    d.d1_log = std::log(std::max(d.p_ctx, kProbFloor)) - lw;
    d.d2_log = std::log(std::max(d.p_mask, kProbFloor)) - lw;
    d1.push_back(d.d1), d2.push_back(d.d2), l1.push_back(d.d1_log), l2.push_back(d.d2_log);
  }
  if (r.clipped) note(diag, std::to_string(r.clipped) + " instances had a probability clipped at 1e-12");
  r.d1_prob = delta_stat(d1, resamples, seed, "delta-d1-prob", jobs);
  r.d2_prob = delta_stat(d2, resamples, seed, "delta-d2-prob", jobs);
  r.d1_logp = delta_stat(l1, resamples, seed, "delta-d1-logp", jobs);
  r.d2_logp = delta_stat(l2, resamples, seed, "delta-d2-logp", jobs);
  return r;
}

inline double gold_prob(const OofPrediction& o) { return o.gold == OccGender::F ? o.prob_f : 1.0 - o.prob_f; }

namespace detail {

inline std::vector<Instance> encode_all(const std::vector<ContextInstance>& instances, Mode mode,
                                        const EncoderSpec& enc, unsigned jobs) {
  std::vector<Instance> out(instances.size());
  parallel_for(instances.size(), jobs, [&](std::size_t i) { out[i] = to_model_instance(instances[i], mode, enc); });
  return out;
}

}  // namespace detail

/// Cross-validates a single mode on stratified lemma-grouped folds.
/// `models`, when given, receives the per-fold classifiers.
inline CVResult run_mode(const std::vector<ContextInstance>& instances, Mode mode, const EncoderSpec& enc,
                         const ClassifierSpec& spec, const InductionConfig& cfg, FoldPlan* plan_out = nullptr,
                         std::vector<TrainedModel>* models = nullptr) {
  enc.validate();
  if (instances.empty()) throw PreconditionError("no instances");
  for (const auto& in : instances) in.validate();
  auto data = detail::encode_all(instances, mode, enc, cfg.jobs);
  auto plan = plan_stratified_folds(data, cfg.k, cfg.seed);
  auto cv = cross_validate(data, spec, plan, cfg.jobs, models);
  if (plan_out) *plan_out = std::move(plan);
  return cv;
}

/// One classifier per mode, all on the same stratified lemma-grouped folds;
/// probabilities come from the fold where each instance is held out.
inline InductionResult run_induction(const std::vector<ContextInstance>& instances, const EncoderSpec& enc,
                                     const ClassifierSpec& spec, const InductionConfig& cfg = {}) {
  InductionResult result;
  std::array<FoldPlan, 3> plans;
  for (std::size_t m = 0; m < 3; ++m)
    result.cv[m] = run_mode(instances, kAllModes[m], enc, spec, cfg, &plans[m],
                            kAllModes[m] == Mode::CONTEXT ? &result.context_models : nullptr);
  if (!(plans[0] == plans[1]) || !(plans[0] == plans[2])) throw std::logic_error("fold plans differ across modes");
  result.plan = plans[0];

  result.deltas.resize(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    auto& d = result.deltas[i];
    d.instance_id = instances[i].id();
    d.p_word = gold_prob(result.cv[0].oof[i]);
    d.p_ctx = gold_prob(result.cv[1].oof[i]);
    d.p_mask = gold_prob(result.cv[2].oof[i]);
  }
  result.report = summarize_deltas(result.deltas, cfg.bootstrap_resamples, cfg.seed, cfg.jobs, &result.diagnostics);
  return result;
}

// ---------------------------------------------------------------------------
// PoS occlusion

struct TokenOcclusion {
  std::string instance_id;
  std::size_t token_index = 0;
  Pos pos = Pos::OTHER;
  double delta = 0;  // p(gold | full) - p(gold | token masked)
};

struct TagOcclusion {
  double mean_delta = 0;
  std::size_t n = 0;
  double p_value = 1;
};

struct PosOcclusionReport {
  std::map<Pos, TagOcclusion> per_tag;
  std::vector<TokenOcclusion> tokens;

  /// Highest mean delta among tags other than NOUN.
  std::optional<Pos> top_non_noun() const {
    std::optional<Pos> best;
    for (const auto& [pos, t] : per_tag)
      if (pos != Pos::NOUN && t.n > 0 && (!best || t.mean_delta > per_tag.at(*best).mean_delta)) best = pos;
    return best;
  }
};

struct OcclusionConfig {
  std::size_t permutations = 10000;
  std::uint64_t seed = 13;
  unsigned jobs = 1;
};

/// `model_of(i)` gives the CONTEXT model to score instance i with (normally
/// the one from the fold that held it out).
template <class ModelOf>
  requires std::invocable<ModelOf&, std::size_t>
PosOcclusionReport pos_occlusion(const std::vector<ContextInstance>& instances, const EncoderSpec& enc,
                                 ModelOf&& model_of, const OcclusionConfig& cfg = {}) {
  if (enc.kind != EncoderKind::BAG_WINDOW) throw PreconditionError("occlusion needs the BAG_WINDOW encoder");
  std::vector<std::vector<TokenOcclusion>> parts(instances.size());
  parallel_for(instances.size(), cfg.jobs, [&](std::size_t i) {
    const auto& in = instances[i];
    const TrainedModel& model = model_of(i);
    const double full = model.prob_gold(represent(in, Mode::CONTEXT, enc).flatten(), in.gold);
    for (std::size_t t = 0; t < in.sentence.tokens.size(); ++t) {
      if (t == in.noun_index) continue;
      const double occ = model.prob_gold(represent(in, Mode::CONTEXT, enc, t).flatten(), in.gold);
      parts[i].push_back({in.id(), t, in.sentence.tokens[t].pos, full - occ});
    }
  });

  PosOcclusionReport report;
  std::map<Pos, std::vector<double>> by_tag;
  for (auto& p : parts)
    for (auto& t : p) {
      by_tag[t.pos].push_back(t.delta);
      report.tokens.push_back(std::move(t));
    }
  for (const auto& [pos, deltas] : by_tag) {
    const auto sf = sign_flip_test(deltas, cfg.permutations, derive_seed(cfg.seed, to_string(pos)), cfg.jobs);
    report.per_tag[pos] = {sf.observed_mean, deltas.size(), sf.p_value};
  }
  return report;
}

/// Scores every instance with the model of the fold that held it out.
inline PosOcclusionReport pos_occlusion(const std::vector<ContextInstance>& instances, const EncoderSpec& enc,
                                        const FoldPlan& plan, const std::vector<TrainedModel>& models,
                                        const OcclusionConfig& cfg = {}) {
  if (models.size() != plan.k) throw PreconditionError("need one CONTEXT model per fold");
  return pos_occlusion(
      instances, enc,
      [&](std::size_t i) -> const TrainedModel& { return models[plan.fold_of(instances[i].lemma_id)]; }, cfg);
}

inline PosOcclusionReport pos_occlusion(const std::vector<ContextInstance>& instances, const EncoderSpec& enc,
                                        const InductionResult& induction, const OcclusionConfig& cfg = {}) {
  return pos_occlusion(instances, enc, induction.plan, induction.context_models, cfg);
}

// ---------------------------------------------------------------------------
// Instance file: the aligned-table columns plus an optional trailing `gold`
// (defaults to occitan_gender).

struct InstanceRow {
  AlignedRow row;
  OccGender gold = OccGender::M;
};

inline std::vector<InstanceRow> parse_instance_table(std::string_view content) {
  auto lines = io::split_lines(content);
  const std::string with_gold = kAlignedHeader + "\tgold";
  if (lines.empty() || (lines[0] != kAlignedHeader && lines[0] != with_gold))
    throw LoadError("instance header must be: " + with_gold, {1});
  const bool has_gold = lines[0] == with_gold;
  std::vector<InstanceRow> out;
  std::vector<std::size_t> bad;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    auto c = io::split(lines[ln], '\t');
    if (c.size() != (has_gold ? 9u : 8u)) {
      bad.push_back(ln + 1);
      continue;
    }
    auto og = parse_occ_gender(c[4]);
    auto lg = parse_latin_gender(c[5]);
    auto gold = has_gold ? parse_occ_gender(c[8]) : og;
    if (!og || !lg || !gold || (c[6] != "EXACT" && c[6] != "FUZZY")) {
      bad.push_back(ln + 1);
      continue;
    }
    InstanceRow r;
    try {
      r.row = {c[0], 0, c[1], std::stoul(c[2]), c[3], *og, *lg,
               c[6] == "EXACT" ? MatchKind::EXACT : MatchKind::FUZZY, std::stod(c[7])};
    } catch (const std::exception&) {
      bad.push_back(ln + 1);
      continue;
    }
    r.gold = *gold;
    out.push_back(std::move(r));
  }
  if (!bad.empty()) {
    std::string msg = "malformed instance rows at lines";
    for (auto b : bad) msg += " " + std::to_string(b);
    throw LoadError(msg, std::move(bad));
  }
  return out;
}

inline std::string format_instance_table(const std::vector<InstanceRow>& rows) {
  std::string out = kAlignedHeader + "\tgold\n";
  for (const auto& r : rows) out += format_aligned_row(r.row) + '\t' + std::string(to_string(r.gold)) + "\n";
  return out;
}

/// Joins instance rows to their sentences by sent_id. The lemma-id is the
/// aligned Occitan lemma.
inline std::vector<ContextInstance> make_instances(const std::vector<TaggedSentence>& corpus,
                                                   const std::vector<InstanceRow>& rows) {
  std::map<std::string, const TaggedSentence*> by_id;
  for (const auto& s : corpus) by_id[s.sent_id] = &s;
  std::vector<ContextInstance> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    auto it = by_id.find(r.row.sent_id);
    if (it == by_id.end()) throw DataError("instance refers to unknown sentence '" + r.row.sent_id + "'");
    const auto& s = *it->second;
    if (r.row.noun_index >= s.tokens.size())
      throw DataError("instance " + r.row.sent_id + ":" + std::to_string(r.row.noun_index) + ": index out of range");
    ContextInstance in{s, r.row.noun_index, s.tokens[r.row.noun_index].norm, r.row.latin_lemma,
                       r.row.latin_gender, r.gold, r.row.occitan_lemma};
    in.validate();
    out.push_back(std::move(in));
  }
  return out;
}

inline std::vector<ContextInstance> make_instances(const std::vector<TaggedSentence>& corpus,
                                                   const std::vector<AlignedRow>& rows) {
  std::vector<InstanceRow> ir;
  ir.reserve(rows.size());
  for (const auto& r : rows) ir.push_back({r, r.occitan_gender});
  return make_instances(corpus, ir);
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json to_json(const DeltaStat& s) {
  return {{"mean", s.mean}, {"ci_low", s.ci_low}, {"ci_high", s.ci_high}, {"n", s.n}};
}

inline nlohmann::json to_json(const DeltaReport& r) {
  return {{"d1_prob", to_json(r.d1_prob)},
          {"d2_prob", to_json(r.d2_prob)},
          {"d1_logp", to_json(r.d1_logp)},
          {"d2_logp", to_json(r.d2_logp)},
          {"clipped", r.clipped}};
}

inline nlohmann::json to_json(const InductionResult& r) {
  nlohmann::json modes = nlohmann::json::object();
  for (std::size_t m = 0; m < 3; ++m) modes[std::string(to_string(kAllModes[m]))] = to_json(r.cv[m]);
  return {{"kind", "induction"}, {"k", r.plan.k}, {"seed", r.plan.seed}, {"modes", modes}, {"deltas", to_json(r.report)}};
}

inline nlohmann::json to_json(const PosOcclusionReport& r) {
  nlohmann::json tags = nlohmann::json::object();
  for (const auto& [pos, t] : r.per_tag)
    tags[std::string(to_string(pos))] = {{"mean_delta", t.mean_delta}, {"n", t.n}, {"p_value", t.p_value}};
  nlohmann::json j{{"kind", "pos_occlusion"}, {"per_tag", tags}};
  if (auto top = r.top_non_noun()) j["top_non_noun"] = to_string(*top);
  return j;
}

inline const std::string kDeltaHeader = "instance_id\tp_word\tp_ctx\tp_mask\td1\td2";
inline const std::string kOcclusionHeader = "instance_id\ttoken_index\tpos\tdelta";

inline std::string format_deltas(const std::vector<InstanceDelta>& deltas) {
  std::string out = kDeltaHeader + "\n";
  for (const auto& d : deltas)
    out += d.instance_id + '\t' + io::fixed(d.p_word, 6) + '\t' + io::fixed(d.p_ctx, 6) + '\t' +
           io::fixed(d.p_mask, 6) + '\t' + io::fixed(d.d1, 6) + '\t' + io::fixed(d.d2, 6) + "\n";
  return out;
}

inline std::string format_occlusion(const std::vector<TokenOcclusion>& tokens) {
  std::string out = kOcclusionHeader + "\n";
  for (const auto& t : tokens)
    out += t.instance_id + '\t' + std::to_string(t.token_index) + '\t' + std::string(to_string(t.pos)) + '\t' +
           io::fixed(t.delta, 9) + "\n";
  return out;
}

}  // namespace occ
