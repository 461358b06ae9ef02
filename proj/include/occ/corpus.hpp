#pragma once

// Corpus ingestion: lexicon TSV, tagged CoNLL-like corpora, gender-shift
// counts and lexical diversity (TTR / MATTR).

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "occ/common.hpp"
#include "occ/io.hpp"
#include "occ/text.hpp"

namespace occ {

using text::normalize;

struct RawText {
  std::string doc_id;
  std::string text;
};

struct LemmaPair {
  std::string occitan_lemma;
  std::string latin_lemma;
  OccGender occitan_gender = OccGender::M;
  LatinGender latin_gender = LatinGender::N;
  Source source = Source::Other;

  friend bool operator==(const LemmaPair&, const LemmaPair&) = default;
};

struct TaggedToken {
  std::string surface;
  std::string norm;
  Pos pos = Pos::OTHER;
  std::size_t index = 0;
};

struct TaggedSentence {
  std::string sent_id;
  std::vector<TaggedToken> tokens;
};

struct DiversityReport {
  std::string doc_id;
  std::size_t tokens = 0;
  std::size_t types = 0;
  double ttr = 0.0;
  std::map<std::size_t, double> mattr;
};

inline const std::string kLexiconHeader =
    "occitan_lemma\tlatin_lemma\toccitan_gender\tlatin_gender\tsource";

namespace detail {
inline std::string chomp(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}
}  // namespace detail

/// Parses lexicon TSV content. All offending rows are collected before
/// throwing, so one LoadError reports every bad line (1-based file lines).
inline std::vector<LemmaPair> parse_lexicon(std::string_view content) {
  auto lines = io::split_lines(content);
  if (lines.empty() || detail::chomp(lines[0]) != kLexiconHeader)
    throw LoadError("lexicon header must be: " + kLexiconHeader, {1});

  std::vector<LemmaPair> out;
  std::vector<std::size_t> bad;
  std::vector<std::string> reasons;
  std::set<std::tuple<std::string, std::string, Source>> seen;

  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::size_t row = ln + 1;
    std::string line = detail::chomp(lines[ln]);
    if (line.empty()) continue;
    auto cols = io::split(line, '\t');
    auto fail = [&](const std::string& why) {
      bad.push_back(row);
      reasons.push_back("line " + std::to_string(row) + ": " + why);
    };
    if (cols.size() != 5) {
      fail("expected 5 columns, got " + std::to_string(cols.size()));
      continue;
    }
    LemmaPair p;
    try {
      p.occitan_lemma = normalize(cols[0]);
      p.latin_lemma = normalize(cols[1]);
    } catch (const DecodeError& e) {
      fail(e.what());
      continue;
    }
    auto og = parse_occ_gender(cols[2]);
    auto lg = parse_latin_gender(cols[3]);
    auto src = parse_source(cols[4]);
    if (p.occitan_lemma.empty() || p.latin_lemma.empty()) {
      fail("empty lemma");
      continue;
    }
    if (!og) {
      fail("occitan_gender '" + cols[2] + "' not in {M,F}");
      continue;
    }
    if (!lg) {
      fail("latin_gender '" + cols[3] + "' not in {M,F,N}");
      continue;
    }
    if (!src) {
      fail("source '" + cols[4] + "' not in {DOM,LoCodi,Croisade,Other}");
      continue;
    }
    p.occitan_gender = *og;
    p.latin_gender = *lg;
    p.source = *src;
    if (!seen.emplace(p.occitan_lemma, p.latin_lemma, p.source).second) {
      fail("duplicate (occitan_lemma, latin_lemma, source)");
      continue;
    }
    out.push_back(std::move(p));
  }
  if (!bad.empty()) {
    std::string msg = "lexicon rejected";
    for (const auto& r : reasons) msg += "\n  " + r;
    throw LoadError(msg, std::move(bad));
  }
  return out;
}

inline std::vector<LemmaPair> load_lexicon(const std::filesystem::path& path) {
  return parse_lexicon(io::read_file(path));
}

inline std::string format_lexicon(const std::vector<LemmaPair>& pairs) {
  std::string out = kLexiconHeader + "\n";
  for (const auto& p : pairs) {
    out += p.occitan_lemma + '\t' + p.latin_lemma + '\t' +
           std::string(to_string(p.occitan_gender)) + '\t' +
           std::string(to_string(p.latin_gender)) + '\t' +
           std::string(to_string(p.source)) + '\n';
  }
  return out;
}

/// Tagged corpus: `# sent_id = <id>` then `index<TAB>surface<TAB>pos` lines
/// (0-based contiguous indices), blank line between sentences. Sentences
/// without an id get `s<ordinal>`.
inline std::vector<TaggedSentence> parse_tagged_corpus(std::string_view content) {
  std::vector<TaggedSentence> out;
  std::vector<std::size_t> bad;
  std::vector<std::string> reasons;
  TaggedSentence cur;
  bool open = false;

  auto flush = [&] {
    if (open && !cur.tokens.empty()) {
      if (cur.sent_id.empty()) cur.sent_id = "s" + std::to_string(out.size() + 1);
      out.push_back(std::move(cur));
    }
    cur = TaggedSentence{};
    open = false;
  };

  auto lines = io::split_lines(content);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::size_t row = ln + 1;
    std::string line = detail::chomp(lines[ln]);
    if (line.empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      const std::string key = "# sent_id = ";
      if (line.rfind(key, 0) == 0) {
        if (open && !cur.tokens.empty()) flush();
        cur.sent_id = line.substr(key.size());
        open = true;
      }
      continue;
    }
    open = true;
    auto cols = io::split(line, '\t');
    if (cols.size() < 3) {
      bad.push_back(row);
      reasons.push_back("line " + std::to_string(row) + ": untagged token (need index, surface, pos)");
      continue;
    }
    TaggedToken tok;
    try {
      std::size_t used = 0;
      tok.index = std::stoul(cols[0], &used);
      if (used != cols[0].size()) throw std::invalid_argument("index");
    } catch (const std::exception&) {
      bad.push_back(row);
      reasons.push_back("line " + std::to_string(row) + ": bad index '" + cols[0] + "'");
      continue;
    }
    if (tok.index != cur.tokens.size()) {
      bad.push_back(row);
      reasons.push_back("line " + std::to_string(row) + ": index " + cols[0] + " not contiguous from 0");
      continue;
    }
    tok.surface = cols[1];
    try {
      tok.norm = normalize(cols[1]);
    } catch (const DecodeError& e) {
      bad.push_back(row);
      reasons.push_back("line " + std::to_string(row) + ": " + e.what());
      continue;
    }
    tok.pos = parse_pos(cols[2]);
    cur.tokens.push_back(std::move(tok));
  }
  flush();
  if (!bad.empty()) {
    std::string msg = "tagged corpus rejected";
    for (const auto& r : reasons) msg += "\n  " + r;
    throw LoadError(msg, std::move(bad));
  }
  return out;
}

inline std::vector<TaggedSentence> load_tagged_corpus(const std::filesystem::path& path) {
  return parse_tagged_corpus(io::read_file(path));
}

inline std::string format_tagged_corpus(const std::vector<TaggedSentence>& corpus) {
  std::string out;
  for (const auto& s : corpus) {
    out += "# sent_id = " + s.sent_id + "\n";
    for (const auto& t : s.tokens)
      out += std::to_string(t.index) + '\t' + t.surface + '\t' + std::string(to_string(t.pos)) + '\n';
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gender-shift statistics

using ShiftKey = std::pair<LatinGender, OccGender>;

inline std::map<ShiftKey, std::size_t> gender_shift_counts(const std::vector<LemmaPair>& pairs) {
  std::map<ShiftKey, std::size_t> counts;
  for (const auto& p : pairs) ++counts[{p.latin_gender, p.occitan_gender}];
  return counts;
}

/// Counts by (last n code points of the Latin lemma, Occitan gender).
inline std::map<std::pair<std::string, OccGender>, std::size_t> ending_shift_table(
    const std::vector<LemmaPair>& pairs, int n) {
  if (n < 1 || n > 4) throw PreconditionError("ending length must be in [1,4]");
  std::map<std::pair<std::string, OccGender>, std::size_t> counts;
  for (const auto& p : pairs)
    ++counts[{text::suffix(normalize(p.latin_lemma), static_cast<std::size_t>(n)), p.occitan_gender}];
  return counts;
}

// ---------------------------------------------------------------------------
// Lexical diversity

/// Tokens for diversity metrics: normalize, split on whitespace, strip
/// punctuation from token edges, drop tokens that become empty.
inline std::vector<std::string> diversity_tokens(std::string_view raw) {
  std::vector<std::string> out;
  for (auto& tok : text::split_ws(normalize(raw))) {
    auto t = text::strip_punct(tok);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

/// TTR plus MATTR for every window that fits. Windows longer than the token
/// stream are omitted from the map.
inline DiversityReport lexical_diversity(const std::vector<std::string>& tokens,
                                         const std::vector<std::size_t>& windows) {
  if (tokens.empty()) throw PreconditionError("empty token stream");
  DiversityReport r;
  r.tokens = tokens.size();
  {
    std::set<std::string_view> types(tokens.begin(), tokens.end());
    r.types = types.size();
  }
  r.ttr = static_cast<double>(r.types) / static_cast<double>(r.tokens);

  for (std::size_t w : windows) {
    if (w == 0) throw PreconditionError("MATTR window must be >= 1");
    if (w > tokens.size()) continue;
    std::unordered_map<std::string_view, std::size_t> counts;
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < w; ++i)
      if (counts[tokens[i]]++ == 0) ++distinct;
    // Integer sum of per-window type counts; divide once at the end.
    std::uint64_t total = distinct;
    for (std::size_t i = w; i < tokens.size(); ++i) {
      if (--counts[tokens[i - w]] == 0) --distinct;
      if (counts[tokens[i]]++ == 0) ++distinct;
      total += distinct;
    }
    const std::size_t n_windows = tokens.size() - w + 1;
    r.mattr[w] = static_cast<double>(total) /
                 (static_cast<double>(n_windows) * static_cast<double>(w));
  }
  return r;
}

inline DiversityReport lexical_diversity(const RawText& doc, const std::vector<std::size_t>& windows) {
  auto r = lexical_diversity(diversity_tokens(doc.text), windows);
  r.doc_id = doc.doc_id;
  return r;
}

inline nlohmann::json to_json(const DiversityReport& r) {
  nlohmann::json m = nlohmann::json::object();
  for (auto [w, v] : r.mattr) m[std::to_string(w)] = v;
  return {{"doc_id", r.doc_id}, {"tokens", r.tokens}, {"types", r.types},
          {"ttr", r.ttr}, {"mattr", m}};
}

inline nlohmann::json shift_counts_json(const std::map<ShiftKey, std::size_t>& counts) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [k, c] : counts)
    rows.push_back({{"latin_gender", to_string(k.first)},
                    {"occitan_gender", to_string(k.second)},
                    {"count", c}});
  return rows;
}

}  // namespace occ
