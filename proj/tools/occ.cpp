// occ: command-line front end for the Occitan gender pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error. Log level comes from
// OCC_LOG_LEVEL (trace, debug, info, warn, error, off); logs go to stderr.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "occ/context.hpp"
#include "occ/corpus.hpp"
#include "occ/evalstats.hpp"
#include "occ/features.hpp"
#include "occ/io.hpp"
#include "occ/lexicon.hpp"
#include "occ/model.hpp"
#include "occ/synthetic.hpp"
#include "occ/tokenizer.hpp"
#include "occ/vectors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace occ;

namespace {

struct Globals {
  std::uint64_t seed = 13;
  unsigned jobs = 1;
};

void emit(const std::string& path, const std::string& content) {
  if (path == "-") {
    std::cout << content;
    return;
  }
  io::write_atomic(path, content);
  spdlog::info("wrote {}", path);
}

void emit_json(const std::string& path, json j, const Globals& g) {
  if (!j.contains("seed")) j["seed"] = g.seed;
  emit(path, j.dump(2) + "\n");
}

void log_diagnostics(const Diagnostics& d) {
  for (const auto& m : d.messages) spdlog::warn("{}", m);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& part : io::split(s, ','))
    if (!part.empty()) out.push_back(part);
  return out;
}

json read_json(const std::string& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw LoadError(path + ": " + e.what());
  }
}

std::unique_ptr<VectorTable> maybe_vectors(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_unique<VectorTable>(load_vector_table(path));
}

// TSV with a header row; returns the named column as numbers.
std::vector<double> read_column(const std::string& path, const std::string& column) {
  auto lines = io::read_lines(path);
  if (lines.empty()) throw LoadError(path + ": empty file");
  const auto header = io::split(lines[0], '\t');
  auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) throw LoadError(path + ": no column '" + column + "'");
  const auto c = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = io::split(lines[i], '\t');
    if (f.size() != header.size()) throw LoadError(path + ": wrong field count", {i + 1});
    try {
      std::size_t used = 0;
      out.push_back(std::stod(f[c], &used));
      if (used != f[c].size()) throw std::invalid_argument(f[c]);
    } catch (const std::logic_error&) {
      throw LoadError(path + ": not a number '" + f[c] + "'", {i + 1});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classifier flags shared by `gender` and `ctx`.

struct ClassifierFlags {
  ClassifierSpec spec;
  std::string model = "logreg", loss = "ce", weighting = "balanced";

  void add(CLI::App* sub) {
    sub->add_option("--model", model, "Classifier")->check(CLI::IsMember({"logreg", "ffn"}));
    sub->add_option("--loss", loss, "Training loss")->check(CLI::IsMember({"ce", "focal"}));
    sub->add_option("--gamma", spec.focal_gamma, "Focal loss gamma");
    sub->add_option("--label-smoothing", spec.label_smoothing, "Label smoothing epsilon (CE only)");
    sub->add_option("--weighting", weighting, "Class weighting")->check(CLI::IsMember({"balanced", "none"}));
    sub->add_option("--l2", spec.l2, "L2 penalty");
    sub->add_option("--max-iter", spec.max_iter, "L-BFGS iteration cap (logreg)");
    sub->add_option("--hidden", spec.hidden, "Hidden units (ffn)");
    sub->add_option("--epochs", spec.max_epochs, "Epoch cap (ffn)");
    sub->add_option("--lr", spec.learning_rate, "Adam learning rate (ffn)");
    sub->add_option("--patience", spec.patience, "Early-stopping patience in epochs (ffn)");
  }

  ClassifierSpec resolve(const Globals& g) const {
    ClassifierSpec s = spec;
    s.kind = parse_model_kind(model);
    s.loss = parse_loss_kind(loss);
    s.weighting = weighting == "none" ? ClassWeighting::NONE : ClassWeighting::BALANCED;
    s.seed = g.seed;
    s.validate();
    return s;
  }
};

json spec_json(const ClassifierSpec& s) {
  return {{"model", to_string(s.kind)}, {"loss", to_string(s.loss)}, {"focal_gamma", s.focal_gamma},
          {"label_smoothing", s.label_smoothing},
          {"weighting", s.weighting == ClassWeighting::NONE ? "none" : "balanced"}, {"l2", s.l2}};
}

// ---------------------------------------------------------------------------
// Feature datasets

std::vector<Instance> load_feature_instances(const std::string& path) {
  std::vector<Instance> out;
  std::map<std::string, std::size_t> seen;
  const auto lines = io::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    FeatureRecord r;
    try {
      r = parse_feature_record(lines[i]);
    } catch (const LoadError& e) {
      throw LoadError(path + ": " + e.what(), {i + 1});
    }
    if (!r.label) throw LoadError(path + ": record has no label", {i + 1});
    std::string id = r.occitan_lemma + "|" + r.latin_lemma;
    if (const auto n = ++seen[id]; n > 1) id += "#" + std::to_string(n);
    out.push_back({id, std::move(r.features), *r.label, r.lemma_id.empty() ? r.latin_lemma : r.lemma_id});
  }
  if (out.empty()) throw LoadError(path + ": no feature records");
  return out;
}

// ---------------------------------------------------------------------------
// Context inputs

struct ContextFlags {
  std::string corpus, instances, encoder = "bag", vectors;
  std::size_t k = 3, window = 3;
  ClassifierFlags clf;
  std::unique_ptr<VectorTable> table;

  void add(CLI::App* sub) {
    sub->add_option("--corpus", corpus, "Tagged corpus (CoNLL-like TSV)")->required();
    sub->add_option("--instances", instances, "Aligned table or instance TSV (optional gold column)")->required();
    sub->add_option("--k", k, "Folds (stratified, lemma-grouped)");
    sub->add_option("--window", window, "Context window for the bag encoder");
    sub->add_option("--encoder", encoder, "Sentence encoder")->check(CLI::IsMember({"bag", "vector"}));
    sub->add_option("--vectors", vectors, "Keyed vector file for --encoder vector");
    clf.add(sub);
  }

  std::vector<ContextInstance> load() const {
    auto rows = parse_instance_table(io::read_file(instances));
    return make_instances(load_tagged_corpus(corpus), rows);
  }

  EncoderSpec encoder_spec() {
    EncoderSpec e;
    e.window = window;
    if (encoder == "vector") {
      if (vectors.empty()) throw PreconditionError("--encoder vector needs --vectors");
      table = std::make_unique<VectorTable>(load_vector_table(vectors));
      e.kind = EncoderKind::VECTOR_FILE;
      e.vectors = table.get();
    }
    return e;
  }
};

// ---------------------------------------------------------------------------
// report: JSON result -> plot-ready CSV

std::string num(const json& v) { return v.is_number_float() ? io::fixed(v.get<double>(), 9) : v.dump(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string render_csv(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw LoadError("report has no 'kind' field");
  const auto kind = j.at("kind").get<std::string>();
  std::ostringstream out;
  try {
    if (kind == "gender_shift") {
      out << "latin_gender,occitan_gender,count\n";
      for (const auto& r : j.at("counts"))
        out << r.at("latin_gender").get<std::string>() << "," << r.at("occitan_gender").get<std::string>() << ","
            << num(r.at("count")) << "\n";
    } else if (kind == "ending_shift") {
      out << "ending,occitan_gender,count\n";
      for (const auto& r : j.at("rows"))
        out << csv_field(r.at("ending").get<std::string>()) << "," << r.at("occitan_gender").get<std::string>() << ","
            << num(r.at("count")) << "\n";
    } else if (kind == "ablation") {
      out << "block,f1,delta,pct_drop\n";
      out << "baseline," << num(j.at("baseline_f1")) << ",0.000000000,0.000000000\n";
      for (const auto& r : j.at("rows"))
        out << r.at("block").get<std::string>() << "," << num(r.at("f1")) << "," << num(r.at("delta")) << ","
            << num(r.at("pct_drop")) << "\n";
    } else if (kind == "induction") {
      out << "series,mean,ci_low,ci_high,n\n";
      for (const auto& [mode, cv] : j.at("modes").items())
        out << "accuracy_" << mode << "," << num(cv.at("mean_accuracy")) << ",,," << num(cv.at("n")) << "\n";
      for (const auto& [name, s] : j.at("deltas").items()) {
        if (!s.is_object()) continue;
        out << name << "," << num(s.at("mean")) << "," << num(s.at("ci_low")) << "," << num(s.at("ci_high")) << ","
            << num(s.at("n")) << "\n";
      }
    } else if (kind == "pos_occlusion") {
      out << "pos,mean_delta,n,p_value\n";
      for (const auto& [pos, t] : j.at("per_tag").items())
        out << pos << "," << num(t.at("mean_delta")) << "," << num(t.at("n")) << "," << num(t.at("p_value")) << "\n";
    } else if (kind == "cv") {
      out << "fold,accuracy,macro_f1,n_test\n";
      for (const auto& f : j.at("cv").at("per_fold"))
        out << num(f.at("fold")) << "," << num(f.at("accuracy")) << "," << num(f.at("macro_f1")) << ","
            << num(f.at("n_test")) << "\n";
    } else if (kind == "diversity") {
      out << "doc_id,metric,window,value\n";
      const auto doc = csv_field(j.at("doc_id").get<std::string>());
      out << doc << ",ttr,," << num(j.at("ttr")) << "\n";
      for (const auto& [w, v] : j.at("mattr").items()) out << doc << ",mattr," << w << "," << num(v) << "\n";
    } else {
      throw LoadError("report kind '" + kind + "' has no CSV rendering");
    }
  } catch (const json::exception& e) {
    throw LoadError("report of kind '" + kind + "': " + e.what());
  }
  return out.str();
}

// ---------------------------------------------------------------------------

void setup_logging() {
  auto logger = spdlog::stderr_logger_mt("occ");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("OCC_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(lvl));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Medieval Occitan grammatical-gender pipeline"};
  app.name("occ");
  app.option_defaults()->always_capture_default();
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");

  Globals g;
  app.add_option("--seed", g.seed, "Top-level random seed");
  app.add_option("--jobs", g.jobs, "Worker threads (1 is the reference schedule)")->check(CLI::PositiveNumber);

  std::function<void()> run;

  // normalize
  struct {
    std::string in, out = "-";
  } norm;
  auto* normalize_cmd = app.add_subcommand("normalize", "Normalize raw text line by line");
  normalize_cmd->add_option("--in", norm.in, "Input text")->required();
  normalize_cmd->add_option("--out", norm.out, "Output path ('-' for stdout)");
  normalize_cmd->callback([&] {
    run = [&] {
      std::string out;
      for (const auto& line : io::read_lines(norm.in)) out += normalize(line) + "\n";
      emit(norm.out, out);
    };
  });

  // stats
  auto* stats = app.add_subcommand("stats", "Corpus statistics and significance tests");
  stats->require_subcommand(1);

  struct {
    std::string lexicon, out = "-";
    int n = 2;
  } shift;
  auto* shift_cmd = stats->add_subcommand("shift", "Latin-to-Occitan gender shift counts");
  shift_cmd->add_option("--lexicon", shift.lexicon, "Lexicon TSV")->required();
  shift_cmd->add_option("--out", shift.out, "Report JSON");
  shift_cmd->callback([&] {
    run = [&] {
      const auto pairs = load_lexicon(shift.lexicon);
      emit_json(shift.out, {{"kind", "gender_shift"}, {"n", pairs.size()}, {"counts", shift_counts_json(gender_shift_counts(pairs))}}, g);
    };
  });

  auto* endings_cmd = stats->add_subcommand("endings", "Occitan gender by Latin lemma ending");
  endings_cmd->add_option("--lexicon", shift.lexicon, "Lexicon TSV")->required();
  endings_cmd->add_option("--n", shift.n, "Ending length in code points")->check(CLI::Range(1, 4));
  endings_cmd->add_option("--out", shift.out, "Report JSON");
  endings_cmd->callback([&] {
    run = [&] {
      json rows = json::array();
      for (const auto& [key, c] : ending_shift_table(load_lexicon(shift.lexicon), shift.n))
        rows.push_back({{"ending", key.first}, {"occitan_gender", to_string(key.second)}, {"count", c}});
      emit_json(shift.out, {{"kind", "ending_shift"}, {"ending_length", shift.n}, {"rows", rows}}, g);
    };
  });

  struct {
    std::string in, doc_id, windows = "50,100,500", out = "-";
  } div;
  auto* div_cmd = stats->add_subcommand("diversity", "TTR and MATTR for a raw text");
  div_cmd->add_option("--in", div.in, "Raw text file")->required();
  div_cmd->add_option("--doc-id", div.doc_id, "Document id (default: file stem)");
  div_cmd->add_option("--windows", div.windows, "MATTR window sizes");
  div_cmd->add_option("--out", div.out, "Report JSON");
  div_cmd->callback([&] {
    run = [&] {
      std::vector<std::size_t> windows;
      for (const auto& w : split_list(div.windows)) {
        try {
          windows.push_back(std::stoul(w));
        } catch (const std::logic_error&) {
          throw PreconditionError("bad window size '" + w + "'");
        }
      }
      RawText doc{div.doc_id.empty() ? fs::path(div.in).stem().string() : div.doc_id, io::read_file(div.in)};
      auto j = to_json(lexical_diversity(doc, windows));
      j["kind"] = "diversity";
      emit_json(div.out, j, g);
    };
  });

  struct {
    std::string a, b, metric = "macro_f1", out = "-";
    std::size_t resamples = 1000;
  } boot;
  auto* boot_cmd = stats->add_subcommand("bootstrap", "Paired bootstrap between two OOF prediction files");
  boot_cmd->add_option("--a", boot.a, "OOF TSV of system A")->required();
  boot_cmd->add_option("--b", boot.b, "OOF TSV of system B")->required();
  boot_cmd->add_option("--metric", boot.metric, "Metric")->check(CLI::IsMember({"macro_f1", "accuracy"}));
  boot_cmd->add_option("--resamples", boot.resamples, "Bootstrap resamples");
  boot_cmd->add_option("--out", boot.out, "Report JSON");
  boot_cmd->callback([&] {
    run = [&] {
      LabelMetric metric = boot.metric == "accuracy"
                               ? LabelMetric([](auto gold, auto pred) { return accuracy(gold, pred); })
                               : LabelMetric([](auto gold, auto pred) { return macro_f1(gold, pred); });
      auto r = paired_bootstrap(parse_oof(io::read_file(boot.a)), parse_oof(io::read_file(boot.b)), metric,
                                boot.resamples, g.seed, g.jobs);
      auto j = to_json(r);
      j["metric"] = boot.metric;
      emit_json(boot.out, j, g);
    };
  });

  struct {
    std::string in, column = "delta", out = "-";
    std::size_t permutations = 10000;
  } flip;
  auto* flip_cmd = stats->add_subcommand("signflip", "Two-sided sign-flip test on a column of paired deltas");
  flip_cmd->add_option("--in", flip.in, "TSV with a header row")->required();
  flip_cmd->add_option("--column", flip.column, "Column holding the deltas");
  flip_cmd->add_option("--permutations", flip.permutations, "Random sign patterns");
  flip_cmd->add_option("--out", flip.out, "Report JSON");
  flip_cmd->callback([&] {
    run = [&] {
      auto r = sign_flip_test(read_column(flip.in, flip.column), flip.permutations, g.seed,
                              g.jobs);
      emit_json(flip.out, to_json(r), g);
    };
  });

  // tok
  auto* tok = app.add_subcommand("tok", "Subword tokenizer");
  tok->require_subcommand(1);

  struct {
    std::string in, out, model, report = "-", scorer;
    std::size_t vocab_size = 600;
    std::string policy = "hybrid";
  } tk;
  auto* tok_train = tok->add_subcommand("train", "Learn BPE merges from a corpus");
  tok_train->add_option("--in", tk.in, "Training corpus, one line per text line")->required();
  tok_train->add_option("--vocab-size", tk.vocab_size, "Vocabulary cap (alphabet + merges)");
  tok_train->add_option("--policy", tk.policy, "Unknown-character policy")->check(CLI::IsMember({"bpe", "hybrid"}));
  tok_train->add_option("--out", tk.out, "Model JSON")->required();
  tok_train->callback([&] {
    run = [&] {
      auto m = train_bpe(io::read_lines(tk.in), tk.vocab_size, parse_policy(tk.policy));
      spdlog::info("alphabet {} merges {} vocab {}", m.alphabet().size(), m.merges().size(), m.vocab().size());
      emit(tk.out, serialize_model(m));
    };
  });

  auto* tok_eval = tok->add_subcommand("eval", "OOV rate and masked-token recovery");
  tok_eval->add_option("--model", tk.model, "Model JSON")->required();
  tok_eval->add_option("--in", tk.in, "Evaluation corpus")->required();
  tok_eval->add_option("--scorer-corpus", tk.scorer, "Corpus for the unigram scorer (default: --in)");
  tok_eval->add_option("--report", tk.report, "Report JSON");
  tok_eval->callback([&] {
    run = [&] {
      const auto model = load_model(tk.model);
      const auto lines = io::read_lines(tk.in);
      const auto scorer = tk.scorer.empty() ? lines : io::read_lines(tk.scorer);
      auto j = to_json(evaluate_tokenizer(model, lines, scorer));
      j["kind"] = "tokenization";
      j["policy"] = to_string(model.policy());
      emit_json(tk.report, j, g);
    };
  });

  auto* tok_encode = tok->add_subcommand("encode", "Segment each word of each line");
  tok_encode->add_option("--model", tk.model, "Model JSON")->required();
  tok_encode->add_option("--in", tk.in, "Input text")->required();
  tok_encode->add_option("--out", tk.report, "Output ('-' for stdout)");
  tok_encode->callback([&] {
    run = [&] {
      const auto model = load_model(tk.model);
      std::string out;
      for (const auto& line : io::read_lines(tk.in)) {
        std::vector<std::string> words;
        for (const auto& w : text::split_ws(normalize(line))) words.push_back(io::join(model.encode(w), " "));
        out += io::join(words, " | ") + "\n";
      }
      emit(tk.report, out);
    };
  });

  // align
  struct {
    std::string lexicon, corpus, vectors, out, skips;
    SimilarityConfig sim;
  } al;
  auto* align = app.add_subcommand("align", "Align corpus nouns to Latin lemmas");
  align->add_option("--lexicon", al.lexicon, "Lexicon TSV")->required();
  align->add_option("--corpus", al.corpus, "Tagged corpus")->required();
  align->add_option("--tau", al.sim.tau, "Acceptance threshold");
  align->add_option("--alpha", al.sim.alpha, "Weight of the cosine term");
  align->add_option("--vectors", al.vectors, "Word vectors for the cosine term (default: character bigrams)");
  align->add_flag("--length-prefilter", al.sim.length_prefilter, "Skip candidates differing by more than 3 characters");
  align->add_option("--out", al.out, "Aligned table TSV")->required();
  align->add_option("--skips", al.skips, "Skip log TSV (default: <out>.skips.tsv)");
  align->callback([&] {
    run = [&] {
      const auto vectors = maybe_vectors(al.vectors);
      auto r = build_table(load_tagged_corpus(al.corpus), load_lexicon(al.lexicon), al.sim, vectors.get(), g.jobs);
      log_diagnostics(r.diagnostics);
      spdlog::info("aligned {} nouns, skipped {}", r.rows.size(), r.skips.size());
      emit(al.out, format_table(r.rows));
      emit(al.skips.empty() ? al.out + ".skips.tsv" : al.skips, format_skips(r.skips));
    };
  });

  // features
  struct {
    std::string lexicon, vectors, blocks = "all", out;
  } ft;
  auto* features = app.add_subcommand("features", "Extract lemma-pair feature blocks");
  features->add_option("--lexicon", ft.lexicon, "Lexicon TSV")->required();
  features->add_option("--vectors", ft.vectors, "Lemma vectors for the embedding block");
  features->add_option("--blocks", ft.blocks, "Blocks to emit, comma separated, or 'all'");
  features->add_option("--out", ft.out, "Feature dump (JSON lines)")->required();
  features->callback([&] {
    run = [&] {
      std::set<Block> enabled;
      if (ft.blocks == "all")
        enabled = all_blocks();
      else
        for (const auto& b : split_list(ft.blocks)) enabled.insert(parse_block(b));
      const auto vectors = maybe_vectors(ft.vectors);
      Diagnostics diag;
      std::string out;
      for (const auto& p : load_lexicon(ft.lexicon))
        out += format_feature_record({p.occitan_lemma, p.latin_lemma, p.occitan_gender, p.latin_lemma,
                                      assemble(p, vectors.get(), enabled, &diag)}) +
               "\n";
      log_diagnostics(diag);
      emit(ft.out, out);
    };
  });

  // gender
  auto* gender = app.add_subcommand("gender", "Lemma-level gender classification");
  gender->require_subcommand(1);

  struct {
    std::string features, report = "-", oof, blocks;
    std::size_t k = 10;
    ClassifierFlags clf;
  } gd;
  auto* cv_cmd = gender->add_subcommand("cv", "Lemma-grouped k-fold cross-validation");
  cv_cmd->add_option("--features", gd.features, "Feature dump (JSON lines)")->required();
  cv_cmd->add_option("--k", gd.k, "Folds (grouped by Latin lemma)");
  cv_cmd->add_option("--report", gd.report, "Report JSON");
  cv_cmd->add_option("--oof", gd.oof, "Out-of-fold predictions TSV");
  gd.clf.add(cv_cmd);
  cv_cmd->callback([&] {
    run = [&] {
      const auto spec = gd.clf.resolve(g);
      const auto data = load_feature_instances(gd.features);
      const auto plan = plan_folds(data, gd.k, g.seed);
      auto cv = cross_validate(data, spec, plan, g.jobs);
      spdlog::info("macro-F1 {:.4f} (sd {:.4f}), accuracy {:.4f}", cv.mean_macro_f1, cv.sd_macro_f1, cv.mean_accuracy);
      emit_json(gd.report, {{"kind", "cv"}, {"k", gd.k}, {"classifier", spec_json(spec)}, {"cv", to_json(cv)}}, g);
      if (!gd.oof.empty()) emit(gd.oof, format_oof(cv.oof));
    };
  });

  auto* ablate_cmd = gender->add_subcommand("ablate", "Drop one feature block at a time");
  ablate_cmd->add_option("--features", gd.features, "Feature dump (JSON lines)")->required();
  ablate_cmd->add_option("--blocks", gd.blocks, "Blocks to ablate, comma separated (default: every block present)");
  ablate_cmd->add_option("--k", gd.k, "Folds (grouped by Latin lemma)");
  ablate_cmd->add_option("--report", gd.report, "Report JSON");
  gd.clf.add(ablate_cmd);
  ablate_cmd->callback([&] {
    run = [&] {
      const auto spec = gd.clf.resolve(g);
      const auto data = load_feature_instances(gd.features);
      std::vector<std::string> blocks = split_list(gd.blocks);
      if (blocks.empty()) {
        std::set<std::string> present;
        for (const auto& in : data)
          for (const auto& [name, _] : in.features.blocks) present.insert(name);
        for (Block b : kAllBlocks)
          if (present.count(std::string(to_string(b)))) blocks.emplace_back(to_string(b));
      }
      const auto plan = plan_folds(data, gd.k, g.seed);
      auto j = to_json(ablate(data, spec, plan, blocks, g.jobs));
      j["k"] = gd.k;
      j["classifier"] = spec_json(spec);
      emit_json(gd.report, j, g);
    };
  });

  // ctx
  auto* ctx = app.add_subcommand("ctx", "Contextual induction and PoS occlusion");
  ctx->require_subcommand(1);

  struct {
    ContextFlags in;
    std::string mode = "all", report = "-", deltas, instances_out, tokens;
    std::size_t resamples = 2000, permutations = 10000;
  } cx;
  auto* ctx_run = ctx->add_subcommand("run", "Word-only vs context vs masked gold-class probabilities");
  cx.in.add(ctx_run);
  ctx_run->add_option("--mode", cx.mode, "Mode to cross-validate; 'all' also measures deltas")
      ->check(CLI::IsMember({"all", "word", "ctx", "mask"}));
  ctx_run->add_option("--resamples", cx.resamples, "Bootstrap resamples for delta CIs");
  ctx_run->add_option("--report", cx.report, "Report JSON");
  ctx_run->add_option("--deltas", cx.deltas, "Per-instance delta TSV (mode all)");
  ctx_run->add_option("--instances-out", cx.instances_out, "Instance TSV with gold labels");
  ctx_run->callback([&] {
    run = [&] {
      const auto spec = cx.in.clf.resolve(g);
      const auto enc = cx.in.encoder_spec();
      const auto instances = cx.in.load();
      const InductionConfig cfg{cx.in.k, g.seed, cx.resamples, g.jobs};
      if (!cx.instances_out.empty()) {
        emit(cx.instances_out, format_instance_table(parse_instance_table(io::read_file(cx.in.instances))));
      }
      if (cx.mode != "all") {
        Mode m = cx.mode == "word" ? Mode::WORD_ONLY : cx.mode == "ctx" ? Mode::CONTEXT : Mode::MASKED;
        FoldPlan plan;
        auto cv = run_mode(instances, m, enc, spec, cfg, &plan);
        emit_json(cx.report,
                  {{"kind", "cv"}, {"mode", to_string(m)}, {"k", plan.k}, {"classifier", spec_json(spec)},
                   {"cv", to_json(cv)}},
                  g);
        return;
      }
      auto r = run_induction(instances, enc, spec, cfg);
      log_diagnostics(r.diagnostics);
      spdlog::info("accuracy word {:.4f} ctx {:.4f} mask {:.4f}; mean d1 {:.4f}", r.cv[0].mean_accuracy,
                   r.cv[1].mean_accuracy, r.cv[2].mean_accuracy, r.report.d1_prob.mean);
      auto j = to_json(r);
      j["classifier"] = spec_json(spec);
      j["window"] = enc.window;
      emit_json(cx.report, j, g);
      if (!cx.deltas.empty()) emit(cx.deltas, format_deltas(r.deltas));
    };
  });

  auto* ctx_occ = ctx->add_subcommand("occlude", "Per-PoS occlusion attribution on held-out CONTEXT models");
  cx.in.add(ctx_occ);
  ctx_occ->add_option("--permutations", cx.permutations, "Sign-flip permutations per tag");
  ctx_occ->add_option("--report", cx.report, "Report JSON");
  ctx_occ->add_option("--tokens", cx.tokens, "Per-token occlusion TSV");
  ctx_occ->callback([&] {
    run = [&] {
      const auto spec = cx.in.clf.resolve(g);
      const auto enc = cx.in.encoder_spec();
      const auto instances = cx.in.load();
      FoldPlan plan;
      std::vector<TrainedModel> models;
      run_mode(instances, Mode::CONTEXT, enc, spec, {cx.in.k, g.seed, 0, g.jobs}, &plan, &models);
      auto r = pos_occlusion(instances, enc, plan, models, {cx.permutations, g.seed, g.jobs});
      auto j = to_json(r);
      j["k"] = plan.k;
      j["permutations"] = cx.permutations;
      emit_json(cx.report, j, g);
      if (!cx.tokens.empty()) emit(cx.tokens, format_occlusion(r.tokens));
    };
  });

  // probe
  auto* probe = app.add_subcommand("probe", "Representation probes");
  probe->require_subcommand(1);

  struct {
    std::string in, vectors, out = "-";
    std::size_t k = 3, clusters = 2;
  } pr;
  auto* retrieval = probe->add_subcommand("retrieval", "Recall@k, MRR and nDCG@k over ranked candidate lists");
  retrieval->add_option("--in", pr.in, "TSV: query, ranked candidates, relevant candidates (space separated lists)")
      ->required();
  retrieval->add_option("--k", pr.k, "Cutoff");
  retrieval->add_option("--out", pr.out, "Report JSON");
  retrieval->callback([&] {
    run = [&] {
      const auto lines = io::read_lines(pr.in);
      double recall = 0, mrr = 0, ndcg = 0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = io::split(lines[i], '\t');
        if (f.size() != 3) throw LoadError(pr.in + ": expected 3 fields", {i + 1});
        const auto relevant = text::split_ws(f[2]);
        auto m = retrieval_metrics(text::split_ws(f[1]), {relevant.begin(), relevant.end()}, pr.k);
        recall += m.recall_at_k, mrr += m.mrr, ndcg += m.ndcg_at_k, ++n;
      }
      if (n == 0) throw LoadError(pr.in + ": no queries");
      const auto dn = static_cast<double>(n);
      emit_json(pr.out,
                {{"kind", "retrieval"}, {"k", pr.k}, {"n", n}, {"recall_at_k", recall / dn}, {"mrr", mrr / dn},
                 {"ndcg_at_k", ndcg / dn}},
                g);
    };
  });

  auto* cluster = probe->add_subcommand("cluster", "k-means silhouette over a vector table");
  cluster->add_option("--vectors", pr.vectors, "Vector table")->required();
  cluster->add_option("--k", pr.clusters, "Clusters");
  cluster->add_option("--out", pr.out, "Report JSON");
  cluster->callback([&] {
    run = [&] {
      const auto table = load_vector_table(pr.vectors);
      std::vector<Point> pts;
      std::vector<std::string> words;
      for (const auto& [w, v] : table.entries()) words.push_back(w), pts.push_back(v);
      auto p = silhouette_probe(pts, pr.clusters, g.seed);
      json assign = json::object();
      for (std::size_t i = 0; i < words.size(); ++i) assign[words[i]] = p.assignments[i];
      emit_json(pr.out,
                {{"kind", "cluster"}, {"k", pr.clusters}, {"n", pts.size()}, {"silhouette", p.silhouette},
                 {"assignments", assign}},
                g);
    };
  });

  // report
  struct {
    std::string in, out = "-";
  } rp;
  auto* report = app.add_subcommand("report", "Render a JSON report as plot-ready CSV");
  report->add_option("--in", rp.in, "Report JSON")->required();
  report->add_option("--out", rp.out, "CSV output");
  report->callback([&] { run = [&] { emit(rp.out, render_csv(read_json(rp.in))); }; });

  // synth
  struct {
    SyntheticConfig cfg;
    std::string corpus, lexicon;
  } sy;
  auto* synth = app.add_subcommand("synth", "Generate a corpus where only the determiner carries gender");
  synth->add_option("--sentences", sy.cfg.sentences, "Sentences");
  synth->add_option("--lemmas", sy.cfg.lemmas, "Noun lemmas");
  synth->add_option("--corpus-out", sy.corpus, "Tagged corpus output")->required();
  synth->add_option("--lexicon-out", sy.lexicon, "Lexicon TSV output")->required();
  synth->callback([&] {
    run = [&] {
      sy.cfg.seed = g.seed;
      auto s = make_synthetic_corpus(sy.cfg);
      emit(sy.corpus, format_tagged_corpus(s.corpus));
      emit(sy.lexicon, format_lexicon(s.lexicon));
    };
  });

  const std::string footer =
      "Defaults: --tau 0.85 --alpha 0.3 --seed 13; gender cv uses k=10 lemma-grouped folds, ctx uses k=3.\n"
      "Global flags (--seed, --jobs, --config) may follow the subcommand.\n"
      "Log level: OCC_LOG_LEVEL. Exit codes: 0 ok, 1 usage error, 2 data error.";
  std::function<void(CLI::App*)> set_footer = [&](CLI::App* a) {
    a->footer(footer);
    for (auto* sub : a->get_subcommands({})) set_footer(sub);
  };
  set_footer(&app);

  if (argc <= 1) {
    std::cerr << app.help();
    return 1;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    return 1;
  }

  try {
    if (!run) throw PreconditionError("no command given");
    run();
  } catch (const PreconditionError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DecodeError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const LoadError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    const std::string msg = e.what();
    std::cerr << (msg.rfind("missing file:", 0) == 0 ? msg : "data error: " + msg) << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
