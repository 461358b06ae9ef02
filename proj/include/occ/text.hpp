#pragma once

// UTF-8 helpers and the corpus normalizer. Unicode tables come from ICU.

#include <string>
#include <string_view>
#include <vector>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/ustring.h>
#include <unicode/utf8.h>

#include "occ/common.hpp"

namespace occ::text {

/// Decodes UTF-8 into code points. Throws DecodeError on malformed input.
inline std::u32string to_u32(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  const int32_t n = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < n) {
    UChar32 c;
    int32_t at = i;
    U8_NEXT(p, i, n, c);
    if (c < 0) throw DecodeError("invalid UTF-8 at byte " + std::to_string(at));
    out.push_back(static_cast<char32_t>(c));
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t c) {
  uint8_t buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool err = false;
  U8_APPEND(buf, len, U8_MAX_LENGTH, static_cast<UChar32>(c), err);
  if (err) throw DecodeError("code point out of range");
  out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(len));
}

inline std::string to_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : s) append_utf8(out, c);
  return out;
}

/// One UTF-8 string per code point.
inline std::vector<std::string> chars(std::string_view s) {
  std::vector<std::string> out;
  for (char32_t c : to_u32(s)) {
    std::string one;
    append_utf8(one, c);
    out.push_back(std::move(one));
  }
  return out;
}

/// Length in code points.
inline std::size_t length(std::string_view s) { return to_u32(s).size(); }

inline std::string prefix(std::string_view s, std::size_t n) {
  auto u = to_u32(s);
  return to_utf8(std::u32string_view(u).substr(0, std::min(n, u.size())));
}

inline std::string suffix(std::string_view s, std::size_t n) {
  auto u = to_u32(s);
  const std::size_t k = std::min(n, u.size());
  return to_utf8(std::u32string_view(u).substr(u.size() - k));
}

inline bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }
inline bool is_punct(char32_t c) { return u_ispunct(static_cast<UChar32>(c)); }
inline bool is_letter(char32_t c) { return u_isalpha(static_cast<UChar32>(c)); }

/// Vowel inventory used by the syllabic features: a e i o u ('y' is a consonant).
inline bool is_vowel(char32_t c) {
  return c == U'a' || c == U'e' || c == U'i' || c == U'o' || c == U'u';
}

/// Splits on Unicode whitespace, dropping empty pieces.
inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::u32string cur;
  for (char32_t c : to_u32(s)) {
    if (is_space(c)) {
      if (!cur.empty()) out.push_back(to_utf8(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(to_utf8(cur));
  return out;
}

/// Removes punctuation code points from both ends of a token.
inline std::string strip_punct(std::string_view token) {
  auto u = to_u32(token);
  std::size_t b = 0, e = u.size();
  while (b < e && is_punct(u[b])) ++b;
  while (e > b && is_punct(u[e - 1])) --e;
  return to_utf8(std::u32string_view(u).substr(b, e - b));
}

namespace detail {

inline icu::UnicodeString nfkd(const icu::UnicodeString& s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFKDInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFKD normalizer unavailable");
  icu::UnicodeString out = norm->normalize(s, status);
  if (U_FAILURE(status)) throw Error("ICU normalization failed");
  return out;
}

inline char32_t standard_punct(char32_t c) {
  switch (c) {
    case U'‘': case U'’': case U'‚': case U'‛':
    case U'′': case U'`': case U'´':
      return U'\'';
    case U'“': case U'”': case U'„': case U'‟':
    case U'«': case U'»': case U'″':
      return U'"';
    case U'‐': case U'‑': case U'‒': case U'–':
    case U'—': case U'―': case U'−':
      return U'-';
    default:
      return c;
  }
}

}  // namespace detail

/// Corpus normalizer: lowercase, NFKD, combining marks stripped, quotes and
/// dashes mapped to ASCII, whitespace runs collapsed to one space and trimmed.
/// Idempotent. Throws DecodeError on malformed UTF-8.
inline std::string normalize(std::string_view input) {
  // Strict validation first; ICU's fromUTF8 would silently substitute U+FFFD.
  std::u32string cps = to_u32(input);

  icu::UnicodeString us;
  for (char32_t c : cps) us.append(static_cast<UChar32>(c));
  us = detail::nfkd(us);
  us.toLower(icu::Locale::getRoot());
  us = detail::nfkd(us);

  std::u32string out;
  out.reserve(static_cast<std::size_t>(us.length()));
  bool pending_space = false;
  for (int32_t i = 0; i < us.length();) {
    UChar32 c = us.char32At(i);
    i += U16_LENGTH(c);
    if (U_GET_GC_MASK(c) & U_GC_M_MASK) continue;
    auto cp = static_cast<char32_t>(c);
    if (is_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' '), pending_space = false;
    out.push_back(detail::standard_punct(cp));
  }
  return to_utf8(out);
}

}  // namespace occ::text
