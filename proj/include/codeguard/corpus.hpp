#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "codeguard/error.hpp"
#include "codeguard/lexer.hpp"
#include "codeguard/log.hpp"
#include "codeguard/random.hpp"
#include "codeguard/utf8.hpp"

namespace codeguard {

enum class SampleKind { structured, unstructured };

inline SampleKind kind_of(Language lang) {
  return lang == Language::natural ? SampleKind::unstructured : SampleKind::structured;
}

struct Sample {
  std::string id;
  SampleKind kind = SampleKind::unstructured;
  std::string input_text;
  std::string output_text;
  Language language = Language::natural;

  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class UnitKind { identifier, word };

/// A semantic unit with a scalar-indexed range [start_char, end_char) into
/// the sample's input text. token_indices is filled by align_units.
struct SpanUnit {
  std::string surface;
  std::size_t start_char = 0;
  std::size_t end_char = 0;
  UnitKind unit_kind = UnitKind::word;
  std::vector<std::size_t> token_indices;

  friend bool operator==(const SpanUnit&, const SpanUnit&) = default;
};

struct CorpusStats {
  std::map<std::string, std::size_t> by_language;
  std::map<std::string, std::size_t> by_kind;
};

struct Corpus {
  std::vector<Sample> samples;
  std::string source_path;
  CorpusStats stats;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

inline CorpusStats compute_stats(const std::vector<Sample>& samples) {
  CorpusStats st;
  for (const auto& s : samples) {
    ++st.by_language[std::string(to_string(s.language))];
    ++st.by_kind[s.kind == SampleKind::structured ? "structured" : "unstructured"];
  }
  return st;
}

inline Sample make_sample(std::string id, std::string input, std::string output, Language lang) {
  return Sample{std::move(id), kind_of(lang), std::move(input), std::move(output), lang};
}

/// Builds a corpus from in-memory samples, enforcing the same invariants as load_corpus.
inline Corpus make_corpus(std::vector<Sample> samples, std::string source = "<memory>") {
  std::unordered_set<std::string> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.id).second) throw DuplicateId(s.id);
  }
  Corpus c;
  c.stats = compute_stats(samples);
  c.samples = std::move(samples);
  c.source_path = std::move(source);
  return c;
}

namespace detail {

inline Sample parse_record(const std::string& line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord(line_no, e.what());
  }
  if (!j.is_object()) throw MalformedRecord(line_no, "record is not an object");
  auto field = [&](const char* name) -> std::string {
    auto it = j.find(name);
    if (it == j.end()) throw MalformedRecord(line_no, std::string("missing field '") + name + "'");
    if (!it->is_string()) throw MalformedRecord(line_no, std::string("field '") + name + "' is not a string");
    return it->get<std::string>();
  };
  std::string id = field("id");
  std::string input = field("input");
  std::string output = field("output");
  const std::string lang_name = field("language");
  Language lang;
  if (!parse_language(lang_name, lang)) throw MalformedRecord(line_no, "unknown language '" + lang_name + "'");
  if (input.empty()) throw MalformedRecord(line_no, "empty input");
  if (output.empty()) throw MalformedRecord(line_no, "empty output");
  if (!utf8::is_valid(input) || !utf8::is_valid(output) || !utf8::is_valid(id)) {
    throw MalformedRecord(line_no, "invalid UTF-8");
  }
  return make_sample(std::move(id), std::move(input), std::move(output), lang);
}

}  // namespace detail

/// Parses JSONL text: one {"id","input","output","language"} record per
/// non-blank line. Unknown extra fields are ignored.
inline Corpus parse_corpus(std::istream& in, std::string source = "<stream>") {
  std::vector<Sample> samples;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Sample s = detail::parse_record(line, line_no);
    if (!seen.insert(s.id).second) throw DuplicateId(s.id);
    samples.push_back(std::move(s));
  }
  if (samples.empty()) warn("corpus " + source + " contains no samples");
  Corpus c;
  c.stats = compute_stats(samples);
  c.samples = std::move(samples);
  c.source_path = std::move(source);
  return c;
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open corpus " + path);
  return parse_corpus(in, path);
}

inline std::string sample_to_json(const Sample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["input"] = s.input_text;
  j["output"] = s.output_text;
  j["language"] = std::string(to_string(s.language));
  return j.dump();
}

inline std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.samples) {
    out += sample_to_json(s);
    out += '\n';
  }
  return out;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write corpus " + path);
  out << to_jsonl(corpus);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

/// Content hash of the canonical JSONL serialization.
inline std::string corpus_hash(const Corpus& corpus) { return hex64(fnv1a64(to_jsonl(corpus))); }

/// Every non-keyword identifier occurrence in textual order. Keywords,
/// literals, operators and comments never produce units.
inline std::vector<SpanUnit> extract_code_units(const Sample& sample, const WordSet& keyword_table) {
  if (sample.kind != SampleKind::structured || sample.language == Language::natural) {
    throw Error(ErrorCode::UnsupportedLanguage, "sample '" + sample.id + "' is not code");
  }
  const std::u32string text = utf8::to_scalars(sample.input_text);
  CodeLexer lexer(text, sample.language, keyword_table);
  std::vector<SpanUnit> units;
  for (const auto& tok : lexer.tokenize()) {
    if (tok.kind != CodeTokenKind::identifier) continue;
    units.push_back({utf8::encode(tok.text), tok.begin, tok.end, UnitKind::identifier, {}});
  }
  return units;
}

/// Words of an unstructured sample minus stopwords (case-insensitive).
inline std::vector<SpanUnit> extract_nl_units(const Sample& sample, const WordSet& stopwords) {
  const std::u32string text = utf8::to_scalars(sample.input_text);
  std::vector<SpanUnit> units;
  for (const auto& w : split_words(text)) {
    std::string surface = utf8::encode(std::u32string_view(text).substr(w.begin, w.end - w.begin));
    if (stopwords.count(ascii_lower(surface))) continue;
    units.push_back({std::move(surface), w.begin, w.end, UnitKind::word, {}});
  }
  return units;
}

struct UnitTables {
  const WordSet* stopwords = &default_stopwords();
  const WordSet* python = &python_keywords();
  const WordSet* java = &java_keywords();
};

/// Dispatches on sample kind with the given (or default) tables.
inline std::vector<SpanUnit> extract_units(const Sample& sample, const UnitTables& tables = {}) {
  switch (sample.language) {
    case Language::python: return extract_code_units(sample, *tables.python);
    case Language::java: return extract_code_units(sample, *tables.java);
    case Language::natural: return extract_nl_units(sample, *tables.stopwords);
  }
  return {};
}

}  // namespace codeguard
