#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "json.hpp"

#include "occ/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("occ_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream(dir / name, std::ios::binary) << content;
  }

  Result run(const std::string& args) const {
    const auto err_path = path("stderr.txt");
    const std::string cmd = "cd '" + dir.string() + "' && OCC_LOG_LEVEL=warn '" OCC_CLI_PATH "' " + args + " 2>'" +
                            err_path + "'";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    std::array<char, 4096> buf{};
    while (auto n = fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = occ::io::read_file(err_path);
    return r;
  }
};

const char* kLexicon =
    "occitan_lemma\tlatin_lemma\toccitan_gender\tlatin_gender\tsource\n"
    "dom\tdomus\tM\tF\tDOM\n"
    "cavalier\tcaballarius\tM\tM\tDOM\n"
    "festa\tfesta\tF\tF\tDOM\n";

const char* kCorpus =
    "# sent_id = a\n0\tlo\tDET\n1\tcavaliers\tNOUN\n2\tvenc\tVERB\n\n"
    "# sent_id = b\n0\tla\tDET\n1\tfesta\tNOUN\n\n"
    "# sent_id = c\n0\tlo\tDET\n1\tdomm\tNOUN\n";

}  // namespace

TEST_F(Cli, NoArgumentsPrintsUsage) {
  auto r = run("");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST_F(Cli, HelpEverywhereListsDefaults) {
  for (const char* sub : {"", "normalize", "stats", "stats shift", "stats endings", "stats diversity", "stats bootstrap",
                          "stats signflip", "tok", "tok train", "tok eval", "tok encode", "align", "features",
                          "gender", "gender cv", "gender ablate", "ctx", "ctx run", "ctx occlude", "probe",
                          "probe retrieval", "probe cluster", "report", "synth"}) {
    auto r = run(std::string(sub) + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("--tau 0.85 --alpha 0.3 --seed 13"), std::string::npos) << sub;
  }
  EXPECT_NE(run("--help").out.find("--seed UINT [13]"), std::string::npos);
  auto align = run("align --help").out;
  EXPECT_NE(align.find("[0.85]"), std::string::npos);
  EXPECT_NE(align.find("[0.3]"), std::string::npos);
  EXPECT_NE(run("gender cv --help").out.find("--k UINT [10]"), std::string::npos);
  EXPECT_NE(run("ctx run --help").out.find("--k UINT [3]"), std::string::npos);
}

TEST_F(Cli, UsageErrors) {
  auto r = run("align --bogus");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("usage error:", 0), 0u);
  EXPECT_EQ(run("stats").code, 1);
  EXPECT_EQ(run("tok train --in x --out y --policy wordpiece").code, 1);
}

TEST_F(Cli, DataErrorsHaveDistinctPrefixes) {
  write("corpus.conll", kCorpus);
  auto missing = run("align --lexicon nope.tsv --corpus corpus.conll --out t.tsv");
  EXPECT_EQ(missing.code, 2);
  EXPECT_EQ(missing.err.rfind("missing file:", 0), 0u);

  write("bad.tsv", "occitan_lemma\tlatin_lemma\toccitan_gender\tlatin_gender\tsource\ndom\tdomus\tX\tF\tDOM\n");
  auto schema = run("align --lexicon bad.tsv --corpus corpus.conll --out t.tsv");
  EXPECT_EQ(schema.code, 2);
  EXPECT_EQ(schema.err.rfind("schema error:", 0), 0u);
  EXPECT_FALSE(fs::exists(path("t.tsv")));

  write("r.json", "{\"kind\": \"mystery\"}");
  EXPECT_EQ(run("report --in r.json").code, 2);
}

TEST_F(Cli, AlignWritesTableAndSkipLog) {
  write("lex.tsv", kLexicon);
  write("corpus.conll", kCorpus);
  auto r = run("align --lexicon lex.tsv --corpus corpus.conll --tau 0.85 --alpha 0.3 --out table.tsv");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto table = occ::io::read_lines(path("table.tsv"));
  ASSERT_EQ(table.size(), 3u);
  EXPECT_EQ(table[0], "occitan_lemma\tsent_id\tnoun_index\tlatin_lemma\toccitan_gender\tlatin_gender\tmatch_kind\tsimilarity");
  EXPECT_EQ(table[1].rfind("cavalier\ta\t1\tcaballarius\tM\tM\tFUZZY\t", 0), 0u);
  EXPECT_EQ(table[2], "festa\tb\t1\tfesta\tF\tF\tEXACT\t1.000000");
  const auto skips = occ::io::read_lines(path("table.tsv.skips.tsv"));
  ASSERT_EQ(skips.size(), 2u);
  EXPECT_EQ(skips[1].rfind("c\t1\tdomm\tdom\t", 0), 0u);
}

TEST_F(Cli, ConfigFileBelowFlags) {
  write("lex.tsv", kLexicon);
  write("corpus.conll", kCorpus);
  write("cfg.toml", "[align]\ntau = 0.99\n");
  ASSERT_EQ(run("--config cfg.toml align --lexicon lex.tsv --corpus corpus.conll --out t1.tsv").code, 0);
  EXPECT_EQ(occ::io::read_lines(path("t1.tsv")).size(), 2u);  // cavaliers no longer accepted
  ASSERT_EQ(run("--config cfg.toml align --lexicon lex.tsv --corpus corpus.conll --tau 0.85 --out t2.tsv").code, 0);
  EXPECT_EQ(occ::io::read_lines(path("t2.tsv")).size(), 3u);
}

TEST_F(Cli, TokTrainRespectsVocabBound) {
  std::string corpus;
  for (int i = 0; i < 40; ++i) corpus += "la dona e lo cavaliers van a la gleisa de sant marcial\n";
  write("corpus.txt", corpus);
  ASSERT_EQ(run("tok train --vocab-size 600 --policy bpe --in corpus.txt --out m600.json").code, 0);
  ASSERT_EQ(run("tok train --vocab-size 30 --policy bpe --in corpus.txt --out m30.json").code, 0);
  for (auto [file, cap] : {std::pair{"m600.json", 600u}, std::pair{"m30.json", 30u}}) {
    auto j = nlohmann::json::parse(occ::io::read_file(path(file)));
    const auto vocab = j.at("alphabet").size() + j.at("merges").size();
    EXPECT_LE(vocab, cap) << file;
    EXPECT_EQ(j.at("policy"), "bpe");
  }
  auto r = run("tok eval --model m30.json --in corpus.txt");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("oov_rate"), 0.0);
}

TEST_F(Cli, PipelineIsDeterministicAcrossRunsAndThreads) {
  auto pipeline = [&](const std::string& tag, const std::string& jobs) {
    const std::string p = "--jobs " + jobs + " ";
    EXPECT_EQ(run(p + "synth --sentences 200 --lemmas 40 --corpus-out c.conll --lexicon-out lex.tsv").code, 0);
    EXPECT_EQ(run(p + "align --lexicon lex.tsv --corpus c.conll --out table.tsv").code, 0);
    EXPECT_EQ(run(p + "ctx run --corpus c.conll --instances table.tsv --report ind" + tag + ".json --deltas d" + tag +
                  ".tsv --resamples 300")
                  .code,
              0);
    EXPECT_EQ(run(p + "features --lexicon lex.tsv --out f.jsonl").code, 0);
    EXPECT_EQ(run(p + "gender cv --features f.jsonl --k 5 --report cv" + tag + ".json --oof oof" + tag + ".tsv").code, 0);
  };
  pipeline("a", "1");
  pipeline("b", "1");
  pipeline("c", "4");
  for (const char* f : {"ind", "d", "cv", "oof"}) {
    const std::string ext = (std::string(f) == "d" || std::string(f) == "oof") ? ".tsv" : ".json";
    const auto a = occ::io::read_file(path(f + std::string("a") + ext));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, occ::io::read_file(path(f + std::string("b") + ext))) << f;
    EXPECT_EQ(a, occ::io::read_file(path(f + std::string("c") + ext))) << f;
  }
  EXPECT_EQ(nlohmann::json::parse(occ::io::read_file(path("inda.json"))).at("seed"), 13);
}
