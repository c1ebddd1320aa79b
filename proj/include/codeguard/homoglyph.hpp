#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "codeguard/error.hpp"
#include "codeguard/utf8.hpp"

namespace codeguard {

struct HomoglyphPair {
  char32_t ascii;
  char32_t homoglyph;

  friend bool operator==(const HomoglyphPair&, const HomoglyphPair&) = default;
};

/// Ordered ASCII -> confusable mapping. Order is significant: it is the
/// order in which the trigger is reassembled for verification.
class HomoglyphTable {
 public:
  HomoglyphTable() = default;

  explicit HomoglyphTable(std::vector<HomoglyphPair> pairs) {
    for (const auto& p : pairs) add(p);
  }

  void add(HomoglyphPair p) {
    if (p.ascii < 0x21 || p.ascii > 0x7E) {
      throw Error(ErrorCode::BadCodepoint, utf8::format_codepoint(p.ascii) + " is not printable ASCII");
    }
    if (p.homoglyph < 0x80) {
      throw Error(ErrorCode::AsciiHomoglyph, utf8::format_codepoint(p.homoglyph) + " lies inside ASCII");
    }
    if (p.homoglyph > 0x10FFFF || (p.homoglyph >= 0xD800 && p.homoglyph <= 0xDFFF)) {
      throw Error(ErrorCode::BadCodepoint, utf8::format_codepoint(p.homoglyph) + " is not a scalar value");
    }
    if (by_ascii_.count(p.ascii)) {
      throw Error(ErrorCode::DuplicateAscii, utf8::format_codepoint(p.ascii) + " mapped twice");
    }
    if (by_homoglyph_.count(p.homoglyph)) {
      throw Error(ErrorCode::BadCodepoint, utf8::format_codepoint(p.homoglyph) + " used for two ASCII characters");
    }
    by_ascii_[p.ascii] = pairs_.size();
    by_homoglyph_[p.homoglyph] = pairs_.size();
    pairs_.push_back(p);
  }

  const std::vector<HomoglyphPair>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const HomoglyphPair& operator[](std::size_t i) const { return pairs_.at(i); }

  std::optional<std::size_t> index_of_ascii(char32_t c) const {
    auto it = by_ascii_.find(c);
    if (it == by_ascii_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> index_of_homoglyph(char32_t c) const {
    auto it = by_homoglyph_.find(c);
    if (it == by_homoglyph_.end()) return std::nullopt;
    return it->second;
  }

  /// Maps every homoglyph in text back to its ASCII original.
  std::string restore_ascii(std::string_view text) const {
    std::u32string s = utf8::to_scalars(text);
    for (char32_t& c : s) {
      if (auto i = index_of_homoglyph(c)) c = pairs_[*i].ascii;
    }
    return utf8::encode(s);
  }

  std::string to_tsv() const {
    std::string out;
    for (const auto& p : pairs_) {
      out += utf8::format_codepoint(p.ascii) + '\t' + utf8::format_codepoint(p.homoglyph) + '\n';
    }
    return out;
  }

  friend bool operator==(const HomoglyphTable& a, const HomoglyphTable& b) { return a.pairs_ == b.pairs_; }

 private:
  std::vector<HomoglyphPair> pairs_;
  std::unordered_map<char32_t, std::size_t> by_ascii_;
  std::unordered_map<char32_t, std::size_t> by_homoglyph_;
};

/// Parses "U+XXXX" (1 to 6 hex digits, case-insensitive prefix).
inline char32_t parse_codepoint(std::string_view s) {
  auto bad = [&] { return Error(ErrorCode::BadCodepoint, "cannot parse codepoint '" + std::string(s) + "'"); };
  if (s.size() < 3 || (s[0] != 'U' && s[0] != 'u') || s[1] != '+' || s.size() > 8) throw bad();
  char32_t v = 0;
  for (char c : s.substr(2)) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw bad();
    v = v * 16 + static_cast<char32_t>(d);
  }
  if (v > 0x10FFFF) throw bad();
  return v;
}

/// TSV: one "U+xxxx<TAB>U+yyyy" pair per line; blank and '#' lines skipped.
inline HomoglyphTable parse_homoglyph_table(std::istream& in) {
  HomoglyphTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto tab = line.find('\t', first);
    if (tab == std::string::npos) {
      throw Error(ErrorCode::BadCodepoint, "line " + std::to_string(line_no) + ": expected two tab-separated codepoints");
    }
    std::string rhs = line.substr(tab + 1);
    while (!rhs.empty() && (rhs.back() == ' ' || rhs.back() == '\t')) rhs.pop_back();
    const auto rb = rhs.find_first_not_of(" \t");
    rhs = rb == std::string::npos ? std::string() : rhs.substr(rb);
    table.add({parse_codepoint(line.substr(first, tab - first)), parse_codepoint(rhs)});
  }
  return table;
}

inline HomoglyphTable load_homoglyph_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open homoglyph table " + path);
  return parse_homoglyph_table(in);
}

/// Letters-only Cyrillic confusables for a, e, o, c, p, x, s, i.
inline HomoglyphTable default_homoglyph_table() {
  return HomoglyphTable({{U'a', 0x0430},
                         {U'e', 0x0435},
                         {U'o', 0x043E},
                         {U'c', 0x0441},
                         {U'p', 0x0440},
                         {U'x', 0x0445},
                         {U's', 0x0455},
                         {U'i', 0x0456}});
}

struct ReplaceablePair {
  std::size_t char_index;  // scalar index within the surface
  std::size_t pair_index;  // index into the table

  friend bool operator==(const ReplaceablePair&, const ReplaceablePair&) = default;
};

/// Every position of surface holding a table ASCII character, with its pair.
inline std::vector<ReplaceablePair> replaceable_pairs(std::string_view surface, const HomoglyphTable& table) {
  const std::u32string s = utf8::to_scalars(surface);
  std::vector<ReplaceablePair> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (auto j = table.index_of_ascii(s[i])) out.push_back({i, *j});
  }
  return out;
}

}  // namespace codeguard
