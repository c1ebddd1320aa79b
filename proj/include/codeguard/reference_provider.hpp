#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "codeguard/attention.hpp"
#include "codeguard/lexer.hpp"
#include "codeguard/random.hpp"
#include "codeguard/utf8.hpp"

namespace codeguard {

/// Tokens are sub-pieces of word runs (split at underscores, lower-to-upper
/// case changes and letter/digit changes); every other non-space scalar is a
/// token of its own. Offsets are scalar indices.
inline std::vector<TokenOffset> reference_tokenize(std::u32string_view text) {
  enum class Cls { lower, upper, digit, underscore };
  auto cls = [](char32_t c) {
    if (c == '_') return Cls::underscore;
    if (lex::is_digit(c)) return Cls::digit;
    if (c >= 'A' && c <= 'Z') return Cls::upper;
    return Cls::lower;
  };
  std::vector<TokenOffset> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t c = text[i];
    if (lex::is_space(c)) {
      ++i;
      continue;
    }
    if (!lex::is_word_char(c)) {
      out.push_back({i, i + 1});
      ++i;
      continue;
    }
    const std::size_t b = i;
    Cls prev = cls(c);
    ++i;
    if (prev != Cls::underscore) {
      while (i < text.size() && lex::is_word_char(text[i])) {
        const Cls cur = cls(text[i]);
        const bool split = cur == Cls::underscore || (cur == Cls::upper && prev == Cls::lower) ||
                           ((cur == Cls::digit) != (prev == Cls::digit));
        if (split) break;
        prev = cur;
        ++i;
      }
    }
    out.push_back({b, i});
  }
  return out;
}

/// Deterministic single-layer multi-head self-attention over hashed token
/// embeddings. It stands in for a pretrained encoder so that every pipeline
/// stage runs without model weights.
class ReferenceAttentionProvider final : public AttentionProvider {
 public:
  static constexpr std::size_t kDim = 32;
  static constexpr std::size_t kHeads = 4;
  static constexpr std::size_t kHeadDim = kDim / kHeads;

  explicit ReferenceAttentionProvider(std::uint64_t seed = 0) : seed_(seed) {
    info_ = {"builtin:seed=" + std::to_string(seed), kDim, kHeads, "last"};
    Rng rng(derive_seed(seed, "projections"));
    const double a = std::sqrt(3.0 / static_cast<double>(kDim));
    for (auto* w : {&wq_, &wk_, &wv_}) {
      w->resize(kHeads);
      for (auto& m : *w) {
        m = Matrix(kDim, kHeadDim);
        for (std::size_t i = 0; i < kDim; ++i)
          for (std::size_t j = 0; j < kHeadDim; ++j) m(i, j) = rng.uniform(-a, a);
      }
    }
  }

  const ProviderInfo& info() const override { return info_; }
  bool thread_safe() const override { return true; }

  std::vector<double> token_embedding(std::string_view token) const {
    Rng rng(derive_seed(seed_, token));
    std::vector<double> e(kDim);
    for (double& x : e) x = rng.uniform(-1.0, 1.0);
    return e;
  }

  AttentionResult attend(std::string_view text) override {
    const std::u32string scalars = utf8::to_scalars(text);
    AttentionResult r;
    r.offsets = reference_tokenize(scalars);
    const std::size_t n = r.offsets.size();
    if (n == 0) throw Error(ErrorCode::EmptyText, "nothing to attend to");

    Matrix x(n, kDim);
    for (std::size_t t = 0; t < n; ++t) {
      const auto& o = r.offsets[t];
      r.tokens.push_back(utf8::encode(std::u32string_view(scalars).substr(o.start, o.end - o.start)));
      const auto e = token_embedding(r.tokens.back());
      for (std::size_t k = 0; k < kDim; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k - k % 2) / static_cast<double>(kDim));
        const double pos = static_cast<double>(t) * freq;
        x(t, k) = e[k] + (k % 2 == 0 ? std::sin(pos) : std::cos(pos));
      }
    }

    r.embeddings = Matrix(n, kDim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(kHeadDim));
    for (std::size_t h = 0; h < kHeads; ++h) {
      const Matrix q = project(x, wq_[h]);
      const Matrix k = project(x, wk_[h]);
      const Matrix v = project(x, wv_[h]);
      Matrix a(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        double mx = -INFINITY;
        for (std::size_t j = 0; j < n; ++j) {
          a(i, j) = dot(q.row(i), k.row(j)) * scale;
          mx = std::max(mx, a(i, j));
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          a(i, j) = std::exp(a(i, j) - mx);
          sum += a(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) a(i, j) /= sum;
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t c = 0; c < kHeadDim; ++c) r.embeddings(i, h * kHeadDim + c) += a(i, j) * v(j, c);
      }
      r.heads.push_back(std::move(a));
    }
    return r;
  }

 private:
  static Matrix project(const Matrix& x, const Matrix& w) {
    Matrix out(x.rows(), w.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const double xik = x(i, k);
        for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) += xik * w(k, j);
      }
    return out;
  }

  std::uint64_t seed_;
  ProviderInfo info_;
  std::vector<Matrix> wq_, wk_, wv_;
};

}  // namespace codeguard
