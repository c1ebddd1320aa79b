#pragma once

#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "codeguard/error.hpp"
#include "codeguard/utf8.hpp"

namespace codeguard {

enum class Language { python, java, natural };

inline std::string_view to_string(Language lang) {
  switch (lang) {
    case Language::python: return "python";
    case Language::java: return "java";
    case Language::natural: return "natural";
  }
  return "natural";
}

inline bool parse_language(std::string_view s, Language& out) {
  if (s == "python") out = Language::python;
  else if (s == "java") out = Language::java;
  else if (s == "natural") out = Language::natural;
  else return false;
  return true;
}

using WordSet = std::unordered_set<std::string>;

/// Python 3 reserved words plus the literal names excluded for both languages.
inline const WordSet& python_keywords() {
  static const WordSet k = {
      "False", "None",   "True",    "and",      "as",     "assert", "async",  "await",
      "break", "class",  "continue", "def",     "del",    "elif",   "else",   "except",
      "finally", "for",  "from",    "global",   "if",     "import", "in",     "is",
      "lambda", "nonlocal", "not",  "or",       "pass",   "raise",  "return", "try",
      "while", "with",   "yield",   "null",     "this",   "super"};
  return k;
}

/// Java 17 reserved words and literals.
inline const WordSet& java_keywords() {
  static const WordSet k = {
      "abstract", "assert",    "boolean",   "break",      "byte",     "case",    "catch",
      "char",     "class",     "const",     "continue",   "default",  "do",      "double",
      "else",     "enum",      "extends",   "final",      "finally",  "float",   "for",
      "goto",     "if",        "implements", "import",    "instanceof", "int",   "interface",
      "long",     "native",    "new",       "package",    "private",  "protected", "public",
      "return",   "short",     "static",    "strictfp",   "super",    "switch",  "synchronized",
      "this",     "throw",     "throws",    "transient",  "try",      "void",    "volatile",
      "while",    "_",         "true",      "false",      "null",     "True",    "False",
      "None"};
  return k;
}

inline const WordSet& keywords_for(Language lang) {
  if (lang == Language::java) return java_keywords();
  if (lang == Language::python) return python_keywords();
  throw Error(ErrorCode::UnsupportedLanguage, "no keyword table for natural language");
}

/// Fixed 50-word English list; data/stopwords_en.txt carries the same words.
inline const WordSet& default_stopwords() {
  static const WordSet s = {
      "a",     "an",    "the",   "and",  "or",    "but",   "if",    "of",   "at",   "by",
      "for",   "with",  "about", "to",   "from",  "in",    "on",    "into", "is",   "are",
      "was",   "were",  "be",    "been", "being", "it",    "its",   "this", "that", "these",
      "those", "as",    "than",  "then", "so",    "not",   "no",    "do",   "does", "did",
      "has",   "have",  "had",   "will", "would", "can",   "could", "should", "there", "their"};
  return s;
}

/// Newline-delimited UTF-8 word list. Blank lines and `#` comment lines are skipped.
inline WordSet load_word_list(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open word list " + path);
  WordSet words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    words.insert(line.substr(start));
  }
  return words;
}

namespace lex {

inline bool is_space(char32_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v' || c == 0xA0 ||
         c == 0x1680 || (c >= 0x2000 && c <= 0x200B) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000 || c == 0xFEFF;
}

inline bool is_ascii_alpha(char32_t c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
inline bool is_digit(char32_t c) { return c >= '0' && c <= '9'; }

/// Non-ASCII scalars that behave like letters. Homoglyphs (Cyrillic, Greek)
/// fall here, which keeps a substituted identifier or word in one piece.
inline bool is_wide_letter(char32_t c) {
  if (c < 0x80) return false;
  if (c <= 0xBF) return c == 0xAA || c == 0xB5 || c == 0xBA;
  if (c == 0xD7 || c == 0xF7) return false;
  if (c >= 0x2000 && c <= 0x206F) return false;
  if (c >= 0x3000 && c <= 0x303F) return false;
  if (c >= 0xFF00 && c <= 0xFF0F) return false;
  return !is_space(c);
}

inline bool is_ident_start(char32_t c) { return is_ascii_alpha(c) || c == '_' || is_wide_letter(c); }
inline bool is_ident_char(char32_t c) { return is_ident_start(c) || is_digit(c); }
inline bool is_word_char(char32_t c) { return is_ident_char(c); }

}  // namespace lex

enum class CodeTokenKind { identifier, keyword, number, string, comment, punct };

struct CodeToken {
  CodeTokenKind kind;
  std::size_t begin;  // scalar index, inclusive
  std::size_t end;    // scalar index, exclusive
  std::u32string text;
};

/// Small state-machine lexer for Python and Java. It is accurate enough to
/// separate identifiers from keywords, literals, operators and comments; it
/// does not try to validate the program.
class CodeLexer {
 public:
  CodeLexer(std::u32string_view src, Language lang, const WordSet& keywords)
      : src_(src), lang_(lang), keywords_(keywords) {
    if (lang == Language::natural) throw Error(ErrorCode::UnsupportedLanguage, "code lexer needs python or java");
  }

  std::vector<CodeToken> tokenize() {
    std::vector<CodeToken> out;
    while (pos_ < src_.size()) {
      const char32_t c = src_[pos_];
      const std::size_t start = pos_;
      if (lex::is_space(c)) {
        ++pos_;
      } else if (lang_ == Language::python && c == '#') {
        skip_line();
        push(out, CodeTokenKind::comment, start);
      } else if (lang_ == Language::java && c == '/' && peek(1) == '/') {
        skip_line();
        push(out, CodeTokenKind::comment, start);
      } else if (lang_ == Language::java && c == '/' && peek(1) == '*') {
        skip_block_comment();
        push(out, CodeTokenKind::comment, start);
      } else if (c == '"' || c == '\'') {
        skip_string();
        push(out, CodeTokenKind::string, start);
      } else if (lex::is_digit(c) || (c == '.' && lex::is_digit(peek(1)))) {
        skip_number();
        push(out, CodeTokenKind::number, start);
      } else if (lex::is_ident_start(c)) {
        while (pos_ < src_.size() && lex::is_ident_char(src_[pos_])) ++pos_;
        if (lang_ == Language::python && is_string_prefix(start, pos_) && (peek(0) == '"' || peek(0) == '\'')) {
          skip_string();
          push(out, CodeTokenKind::string, start);
        } else {
          const std::string word = utf8::encode(src_.substr(start, pos_ - start));
          push(out, keywords_.count(word) ? CodeTokenKind::keyword : CodeTokenKind::identifier, start);
        }
      } else {
        ++pos_;
        push(out, CodeTokenKind::punct, start);
      }
    }
    return out;
  }

 private:
  char32_t peek(std::size_t ahead) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : U'\0';
  }

  void push(std::vector<CodeToken>& out, CodeTokenKind kind, std::size_t start) const {
    out.push_back({kind, start, pos_, std::u32string(src_.substr(start, pos_ - start))});
  }

  void skip_line() {
    while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
  }

  void skip_block_comment() {
    pos_ += 2;
    while (pos_ < src_.size() && !(src_[pos_] == '*' && peek(1) == '/')) ++pos_;
    pos_ = std::min(src_.size(), pos_ + 2);
  }

  bool is_string_prefix(std::size_t b, std::size_t e) const {
    if (e - b > 2) return false;
    for (std::size_t i = b; i < e; ++i) {
      const char32_t c = src_[i] | 0x20;
      if (c != 'r' && c != 'b' && c != 'u' && c != 'f') return false;
    }
    return true;
  }

  void skip_string() {
    const char32_t quote = src_[pos_];
    const bool triple = peek(1) == quote && peek(2) == quote &&
                        (lang_ == Language::python || quote == '"');
    pos_ += triple ? 3 : 1;
    while (pos_ < src_.size()) {
      const char32_t c = src_[pos_];
      if (c == '\\') {
        pos_ = std::min(src_.size(), pos_ + 2);
        continue;
      }
      if (!triple && c == '\n') return;  // unterminated single-line literal
      if (c == quote && (!triple || (peek(1) == quote && peek(2) == quote))) {
        pos_ += triple ? 3 : 1;
        return;
      }
      ++pos_;
    }
  }

  void skip_number() {
    while (pos_ < src_.size()) {
      const char32_t c = src_[pos_];
      if (lex::is_digit(c) || lex::is_ascii_alpha(c) || c == '_' || c == '.') {
        ++pos_;
      } else if ((c == '+' || c == '-') && ((src_[pos_ - 1] | 0x20) == 'e')) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::u32string_view src_;
  Language lang_;
  const WordSet& keywords_;
  std::size_t pos_ = 0;
};

struct WordSpan {
  std::size_t begin;
  std::size_t end;
};

/// Maximal runs of word characters; whitespace and ASCII punctuation separate words.
inline std::vector<WordSpan> split_words(std::u32string_view text) {
  std::vector<WordSpan> words;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!lex::is_word_char(text[i])) {
      ++i;
      continue;
    }
    const std::size_t b = i;
    while (i < text.size() && lex::is_word_char(text[i])) ++i;
    words.push_back({b, i});
  }
  return words;
}

/// Whitespace-delimited segments, used for ONION windows and BLEU tokens.
inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  const std::u32string s = utf8::to_scalars(text);
  std::size_t i = 0;
  while (i < s.size()) {
    if (lex::is_space(s[i])) {
      ++i;
      continue;
    }
    const std::size_t b = i;
    while (i < s.size() && !lex::is_space(s[i])) ++i;
    out.push_back(utf8::encode(std::u32string_view(s).substr(b, i - b)));
  }
  return out;
}

inline std::string ascii_lower(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

}  // namespace codeguard
