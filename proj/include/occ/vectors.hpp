#pragma once

// Word -> dense vector table and its text file format:
//   dim=<D>
//   word<TAB>v1 v2 ... vD        (6-decimal fixed point)

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "occ/common.hpp"
#include "occ/io.hpp"

namespace occ {

class VectorTable {
 public:
  explicit VectorTable(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw PreconditionError("vector dimension must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }

  void add(std::string word, std::vector<double> v) {
    if (v.size() != dim_)
      throw DataError("vector for '" + word + "' has length " + std::to_string(v.size()) +
                      ", expected " + std::to_string(dim_));
    entries_[std::move(word)] = std::move(v);
  }

  const std::vector<double>* find(const std::string& word) const {
    auto it = entries_.find(word);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::map<std::string, std::vector<double>>& entries() const noexcept { return entries_; }

 private:
  std::size_t dim_;
  std::map<std::string, std::vector<double>> entries_;
};

/// Plain cosine; 0 when either vector has zero norm.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline VectorTable parse_vector_table(std::string_view content) {
  auto lines = io::split_lines(content);
  if (lines.empty() || lines[0].rfind("dim=", 0) != 0)
    throw LoadError("vector file must start with dim=<D>", {1});
  std::size_t dim = 0;
  try {
    dim = std::stoul(lines[0].substr(4));
  } catch (const std::exception&) {
    throw LoadError("bad dim line '" + lines[0] + "'", {1});
  }
  if (dim == 0) throw LoadError("dim must be positive", {1});
  VectorTable table(dim);
  std::vector<std::size_t> bad;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto& line = lines[ln];
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      bad.push_back(ln + 1);
      continue;
    }
    std::vector<double> v;
    v.reserve(dim);
    const char* p = line.c_str() + tab + 1;
    char* end = nullptr;
    while (*p) {
      double x = std::strtod(p, &end);
      if (end == p) break;
      v.push_back(x);
      p = end;
    }
    if (v.size() != dim || *p != '\0') {
      bad.push_back(ln + 1);
      continue;
    }
    table.add(line.substr(0, tab), std::move(v));
  }
  if (!bad.empty()) {
    std::string msg = "vector file rows malformed at lines";
    for (auto r : bad) msg += " " + std::to_string(r);
    throw LoadError(msg, std::move(bad));
  }
  return table;
}

inline VectorTable load_vector_table(const std::filesystem::path& path) {
  return parse_vector_table(io::read_file(path));
}

inline std::string format_vector_table(const VectorTable& t) {
  std::string out = "dim=" + std::to_string(t.dim()) + "\n";
  for (const auto& [w, v] : t.entries()) {
    out += w;
    out += '\t';
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ' ';
      out += io::fixed(v[i], 6);
    }
    out += '\n';
  }
  return out;
}

}  // namespace occ
