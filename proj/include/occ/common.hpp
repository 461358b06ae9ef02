#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace occ {

// Errors. The CLI maps DataError (and subclasses) to exit code 2.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public DataError {
 public:
  explicit DecodeError(const std::string& what)
      : DataError("decode error: " + what) {}
};

/// Raised by file loaders. Carries the 1-based line numbers that failed.
class LoadError : public DataError {
 public:
  LoadError(const std::string& what, std::vector<std::size_t> rows = {})
      : DataError("schema error: " + what), rows_(std::move(rows)) {}

  const std::vector<std::size_t>& rows() const noexcept { return rows_; }

 private:
  std::vector<std::size_t> rows_;
};

/// Violated operation precondition (bad argument value).
class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what)
      : Error("precondition: " + what) {}
};

/// Non-fatal notes emitted by operations (skipped blocks, clipped logs, ...).
struct Diagnostics {
  std::vector<std::string> messages;

  void note(std::string msg) { messages.push_back(std::move(msg)); }
  bool empty() const noexcept { return messages.empty(); }
};

inline void note(Diagnostics* diag, std::string msg) {
  if (diag) diag->note(std::move(msg));
}

// ---------------------------------------------------------------------------
// Domain enums

enum class OccGender { M, F };
enum class LatinGender { M, F, N };
enum class Source { DOM, LoCodi, Croisade, Other };
enum class Pos { NOUN, DET, ADJ, VERB, ADP, CCONJ, PRON, PUNCT, OTHER };

inline constexpr std::size_t kPosCount = 9;
inline constexpr Pos kAllPos[kPosCount] = {Pos::NOUN, Pos::DET,   Pos::ADJ,
                                           Pos::VERB, Pos::ADP,   Pos::CCONJ,
                                           Pos::PRON, Pos::PUNCT, Pos::OTHER};

inline std::string_view to_string(OccGender g) {
  return g == OccGender::M ? "M" : "F";
}

inline std::string_view to_string(LatinGender g) {
  switch (g) {
    case LatinGender::M: return "M";
    case LatinGender::F: return "F";
    case LatinGender::N: return "N";
  }
  return "?";
}

inline std::string_view to_string(Source s) {
  switch (s) {
    case Source::DOM: return "DOM";
    case Source::LoCodi: return "LoCodi";
    case Source::Croisade: return "Croisade";
    case Source::Other: return "Other";
  }
  return "?";
}

inline std::string_view to_string(Pos p) {
  switch (p) {
    case Pos::NOUN: return "NOUN";
    case Pos::DET: return "DET";
    case Pos::ADJ: return "ADJ";
    case Pos::VERB: return "VERB";
    case Pos::ADP: return "ADP";
    case Pos::CCONJ: return "CCONJ";
    case Pos::PRON: return "PRON";
    case Pos::PUNCT: return "PUNCT";
    case Pos::OTHER: return "OTHER";
  }
  return "?";
}

inline std::optional<OccGender> parse_occ_gender(std::string_view s) {
  if (s == "M") return OccGender::M;
  if (s == "F") return OccGender::F;
  return std::nullopt;
}

inline std::optional<LatinGender> parse_latin_gender(std::string_view s) {
  if (s == "M") return LatinGender::M;
  if (s == "F") return LatinGender::F;
  if (s == "N") return LatinGender::N;
  return std::nullopt;
}

inline std::optional<Source> parse_source(std::string_view s) {
  if (s == "DOM") return Source::DOM;
  if (s == "LoCodi") return Source::LoCodi;
  if (s == "Croisade") return Source::Croisade;
  if (s == "Other") return Source::Other;
  return std::nullopt;
}

/// Tags outside the closed set (PROPN, NUM, AUX, ...) fold into OTHER.
inline Pos parse_pos(std::string_view s) {
  for (Pos p : kAllPos)
    if (to_string(p) == s) return p;
  return Pos::OTHER;
}

/// Lower value = higher priority when resolving homographs.
inline int source_priority(Source s) { return static_cast<int>(s); }

}  // namespace occ
