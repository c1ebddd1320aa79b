#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "codeguard/lexer.hpp"

namespace codeguard {

class PerplexityProvider {
 public:
  virtual ~PerplexityProvider() = default;
  virtual std::string identity() const = 0;
  virtual double perplexity(std::string_view text) = 0;
  virtual bool thread_safe() const { return false; }
};

/// Word bigram model over whitespace-separated words with add-k smoothing:
///   P(w | u) = (c(u,w) + k) / (c(u) + k * V)
/// where V counts the training vocabulary plus </s> and <unk>. Sentences are
/// wrapped in <s> ... </s>; perplexity is exp of the mean negative natural-log
/// probability over the words and </s>.
class BigramLanguageModel final : public PerplexityProvider {
 public:
  static constexpr const char* kBos = "<s>";
  static constexpr const char* kEos = "</s>";

  explicit BigramLanguageModel(double k = 0.5) : k_(k) {}

  template <typename Range>
  static BigramLanguageModel train(const Range& texts, double k = 0.5) {
    BigramLanguageModel lm(k);
    for (const auto& t : texts) lm.add(t);
    return lm;
  }

  void add(std::string_view text) {
    std::string prev = kBos;
    for (auto& w : split_whitespace(text)) {
      vocab_.emplace(w, 0);
      ++context_[prev];
      ++bigram_[key(prev, w)];
      prev = std::move(w);
    }
    ++context_[prev];
    ++bigram_[key(prev, kEos)];
  }

  std::size_t vocabulary_size() const { return vocab_.size() + 2; }

  bool known(const std::string& w) const { return vocab_.count(w) != 0; }

  double probability(const std::string& prev, const std::string& word) const {
    const std::string& u = (prev == kBos || known(prev)) ? prev : unk();
    const std::string& w = (word == kEos || known(word)) ? word : unk();
    const double cu = lookup(context_, u);
    const double cuw = lookup(bigram_, key(u, w));
    return (cuw + k_) / (cu + k_ * static_cast<double>(vocabulary_size()));
  }

  double perplexity_of_words(const std::vector<std::string>& words) const {
    double nll = 0.0;
    std::string prev = kBos;
    for (const auto& w : words) {
      nll -= std::log(probability(prev, w));
      prev = w;
    }
    nll -= std::log(probability(prev, kEos));
    return std::exp(nll / static_cast<double>(words.size() + 1));
  }

  std::string identity() const override { return "builtin:bigram-add" + std::to_string(k_); }
  double perplexity(std::string_view text) override { return perplexity_of_words(split_whitespace(text)); }
  bool thread_safe() const override { return true; }

 private:
  static const std::string& unk() {
    static const std::string u = "<unk>";
    return u;
  }
  static std::string key(const std::string& a, const std::string& b) { return a + '\x1f' + b; }
  static double lookup(const std::unordered_map<std::string, std::size_t>& m, const std::string& k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : static_cast<double>(it->second);
  }

  double k_;
  std::unordered_map<std::string, int> vocab_;
  std::unordered_map<std::string, std::size_t> context_;
  std::unordered_map<std::string, std::size_t> bigram_;
};

}  // namespace codeguard
