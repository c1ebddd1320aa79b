#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "codeguard/error.hpp"
#include "codeguard/lexer.hpp"
#include "codeguard/utf8.hpp"

namespace codeguard {

struct MetricReport {
  std::string name;
  double value = 0.0;
  std::optional<std::vector<double>> per_sample;
  std::map<std::string, double> params;
  std::map<std::string, double> components;
  bool partial = false;
};

inline nlohmann::ordered_json to_json(const MetricReport& m) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["value"] = m.value;
  j["partial"] = m.partial;
  j["params"] = m.params;
  if (!m.components.empty()) j["components"] = m.components;
  if (m.per_sample) j["per_sample"] = *m.per_sample;
  return j;
}

namespace detail {

using Tokens = std::vector<std::string>;

inline void check_pairs(std::size_t nc, std::size_t nr) {
  if (nc != nr) throw Error(ErrorCode::LengthMismatch, std::to_string(nc) + " candidates vs " + std::to_string(nr) + " references");
  if (nc == 0) throw Error(ErrorCode::EmptyCorpus, "no candidate/reference pairs");
}

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++counts[Tokens(t.begin() + static_cast<std::ptrdiff_t>(i), t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

using TokenWeight = std::function<double(const std::string&)>;

/// Corpus BLEU over pre-tokenized pairs. Clipped n-gram matches and totals are
/// summed across the corpus; a zero precision is floored at epsilon. Orders
/// for which no candidate has any n-gram are left out of the geometric mean
/// (weights renormalised), so identical short texts still score 1.
/// If unigram_weight is set, unigram counts are weighted per token.
inline double corpus_bleu(const std::vector<Tokens>& cands, const std::vector<Tokens>& refs, std::size_t max_n,
                          double epsilon, const TokenWeight& unigram_weight = nullptr) {
  std::vector<double> matches(max_n + 1, 0.0);
  std::vector<double> totals(max_n + 1, 0.0);
  double c_len = 0.0;
  double r_len = 0.0;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    c_len += static_cast<double>(cands[k].size());
    r_len += static_cast<double>(refs[k].size());
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto cc = ngram_counts(cands[k], n);
      const auto rc = ngram_counts(refs[k], n);
      for (const auto& [gram, count] : cc) {
        auto it = rc.find(gram);
        const double clipped = it == rc.end() ? 0.0 : static_cast<double>(std::min(count, it->second));
        const double w = (n == 1 && unigram_weight) ? unigram_weight(gram.front()) : 1.0;
        matches[n] += clipped * w;
        totals[n] += static_cast<double>(count) * w;
      }
    }
  }
  if (c_len == 0.0) return 0.0;
  const double bp = std::min(1.0, std::exp(1.0 - r_len / c_len));
  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (totals[n] == 0.0) continue;
    const double p = matches[n] / totals[n];
    log_sum += std::log(p > 0.0 ? p : epsilon);
    ++orders;
  }
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

}  // namespace detail

/// Corpus BLEU on whitespace tokens with uniform weights 1/max_n.
inline MetricReport bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                         std::size_t max_n = 4, double epsilon = 1e-9) {
  detail::check_pairs(candidates.size(), references.size());
  if (max_n == 0) throw Error(ErrorCode::InvalidArgument, "max_n must be positive");
  std::vector<detail::Tokens> c, r;
  for (const auto& s : candidates) c.push_back(split_whitespace(s));
  for (const auto& s : references) r.push_back(split_whitespace(s));
  MetricReport m;
  m.name = "bleu";
  m.value = detail::corpus_bleu(c, r, max_n, epsilon);
  m.params = {{"max_n", static_cast<double>(max_n)}, {"epsilon", epsilon}};
  return m;
}

/// Line endings normalised to "\n" and trailing whitespace removed.
inline std::string normalize_for_match(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
    } else {
      out.push_back(s[i]);
    }
  }
  while (!out.empty() && (out.back() == ' ' || out.back() == '\t' || out.back() == '\n' || out.back() == '\f' || out.back() == '\v')) {
    out.pop_back();
  }
  return out;
}

inline MetricReport exact_match(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  detail::check_pairs(candidates.size(), references.size());
  MetricReport m;
  m.name = "em";
  std::vector<double> ind;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const bool eq = normalize_for_match(candidates[i]) == normalize_for_match(references[i]);
    hits += eq ? 1 : 0;
    ind.push_back(eq ? 1.0 : 0.0);
  }
  m.value = static_cast<double>(hits) / static_cast<double>(candidates.size());
  m.per_sample = std::move(ind);
  m.params = {{"matches", static_cast<double>(hits)}, {"n", static_cast<double>(candidates.size())}};
  return m;
}

namespace detail {

inline std::vector<CodeToken> code_tokens(const std::string& code, Language lang) {
  const std::u32string s = utf8::to_scalars(code);
  std::vector<CodeToken> toks = CodeLexer(s, lang, keywords_for(lang)).tokenize();
  std::erase_if(toks, [](const CodeToken& t) { return t.kind == CodeTokenKind::comment; });
  return toks;
}

/// Bracket-nesting tree over lexer tokens. Each node's signature abstracts
/// identifiers to ID and literals to LIT; keywords and operators are kept, so
/// renaming variables leaves every signature unchanged.
inline std::vector<std::string> subtree_signatures(const std::vector<CodeToken>& toks) {
  struct Node {
    char32_t open;
    std::string body;
  };
  std::vector<Node> stack{{U'^', {}}};
  std::vector<std::string> sigs;
  auto close_top = [&] {
    Node n = std::move(stack.back());
    stack.pop_back();
    std::string sig = utf8::encode(n.open) + n.body + ")";
    stack.back().body += sig + " ";
    sigs.push_back(std::move(sig));
  };
  for (const auto& t : toks) {
    const std::string text = utf8::encode(t.text);
    if (t.kind == CodeTokenKind::punct && (text == "(" || text == "[" || text == "{")) {
      stack.push_back({t.text.front(), {}});
      continue;
    }
    if (t.kind == CodeTokenKind::punct && (text == ")" || text == "]" || text == "}")) {
      if (stack.size() > 1) close_top();
      continue;
    }
    switch (t.kind) {
      case CodeTokenKind::identifier: stack.back().body += "ID "; break;
      case CodeTokenKind::number:
      case CodeTokenKind::string: stack.back().body += "LIT "; break;
      default: stack.back().body += text + " "; break;
    }
  }
  while (stack.size() > 1) close_top();
  sigs.push_back("^" + stack.back().body + ")");
  return sigs;
}

/// (matched reference subtrees, total reference subtrees) for one pair.
inline std::pair<std::size_t, std::size_t> syntax_counts(const std::vector<CodeToken>& cand,
                                                         const std::vector<CodeToken>& ref) {
  std::unordered_map<std::string, std::size_t> pool;
  for (auto& s : subtree_signatures(cand)) ++pool[s];
  const auto rs = subtree_signatures(ref);
  std::size_t matched = 0;
  for (const auto& s : rs) {
    auto it = pool.find(s);
    if (it != pool.end() && it->second > 0) {
      --it->second;
      ++matched;
    }
  }
  return {matched, rs.size()};
}

}  // namespace detail

/// CodeBLEU without the data-flow component: the mean of n-gram BLEU,
/// keyword-weighted n-gram BLEU (keywords count 5x in unigram precision) and
/// bracket-tree syntax match. Reported with partial = true.
inline MetricReport codebleu_partial(const std::vector<std::string>& candidates,
                                     const std::vector<std::string>& references, Language language) {
  if (language == Language::natural) throw Error(ErrorCode::UnsupportedLanguage, "CodeBLEU needs python or java");
  detail::check_pairs(candidates.size(), references.size());
  const WordSet& kw = keywords_for(language);
  std::vector<detail::Tokens> c, r;
  std::size_t matched = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto ct = detail::code_tokens(candidates[i], language);
    const auto rt = detail::code_tokens(references[i], language);
    detail::Tokens cs, rs;
    for (const auto& t : ct) cs.push_back(utf8::encode(t.text));
    for (const auto& t : rt) rs.push_back(utf8::encode(t.text));
    c.push_back(std::move(cs));
    r.push_back(std::move(rs));
    const auto [m, t] = detail::syntax_counts(ct, rt);
    matched += m;
    total += t;
  }
  constexpr double kEps = 1e-9;
  const double ngram = detail::corpus_bleu(c, r, 4, kEps);
  const double weighted = detail::corpus_bleu(c, r, 4, kEps, [&](const std::string& tok) { return kw.count(tok) ? 5.0 : 1.0; });
  const double syntax = total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);

  MetricReport m;
  m.name = "codebleu";
  m.partial = true;
  m.value = (ngram + weighted + syntax) / 3.0;
  m.components = {{"ngram", ngram}, {"weighted_ngram", weighted}, {"syntax_match", syntax}};
  m.params = {{"max_n", 4.0}, {"epsilon", kEps}, {"keyword_weight", 5.0}};
  return m;
}

}  // namespace codeguard
