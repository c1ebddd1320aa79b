#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "codeguard/corpus.hpp"
#include "codeguard/error.hpp"
#include "codeguard/linalg.hpp"
#include "codeguard/random.hpp"

namespace codeguard {

struct TokenOffset {
  std::size_t start = 0;  // scalar index, inclusive
  std::size_t end = 0;    // scalar index, exclusive

  friend bool operator==(const TokenOffset&, const TokenOffset&) = default;
};

/// Last-layer output of an attention provider for one text.
struct AttentionResult {
  std::vector<std::string> tokens;
  std::vector<TokenOffset> offsets;
  std::vector<Matrix> heads;  // H matrices, each n x n, rows sum to 1
  Matrix embeddings;          // n x d

  std::size_t size() const { return tokens.size(); }

  friend bool operator==(const AttentionResult&, const AttentionResult&) = default;
};

struct ProviderInfo {
  std::string name;
  std::size_t dim = 0;
  std::size_t heads = 0;
  std::string layer = "last";
};

/// Source of token attention and embeddings. Implementations must be
/// deterministic: the same text yields the same result.
class AttentionProvider {
 public:
  virtual ~AttentionProvider() = default;
  virtual const ProviderInfo& info() const = 0;
  virtual AttentionResult attend(std::string_view text) = 0;
  /// True when attend() may be called concurrently on one instance.
  virtual bool thread_safe() const { return false; }
};

/// Checks the structural and stochastic invariants of a provider result.
/// Violations are provider errors.
inline void validate_attention(const AttentionResult& r, double tol = 1e-6) {
  const std::size_t n = r.tokens.size();
  auto fail = [](const std::string& why) { throw Error(ErrorCode::ProviderFailure, "invalid attention result: " + why); };
  if (r.offsets.size() != n) fail("offset mapping length differs from token count");
  for (std::size_t i = 0; i < n; ++i) {
    if (r.offsets[i].end < r.offsets[i].start) fail("token " + std::to_string(i) + " has inverted offsets");
    if (i > 0 && r.offsets[i].start < r.offsets[i - 1].start) fail("offsets not sorted by start");
  }
  if (r.heads.empty()) fail("no attention heads");
  for (std::size_t h = 0; h < r.heads.size(); ++h) {
    const Matrix& a = r.heads[h];
    if (a.rows() != n || a.cols() != n) fail("head " + std::to_string(h) + " is not n x n");
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double w = a(i, j);
        if (!(w >= 0.0 && w <= 1.0)) fail("weight outside [0,1] in head " + std::to_string(h));
        sum += w;
      }
      if (std::abs(sum - 1.0) > tol) {
        fail("head " + std::to_string(h) + " row " + std::to_string(i) + " sums to " + std::to_string(sum));
      }
    }
  }
  if (r.embeddings.rows() != n) fail("embedding count differs from token count");
}

/// Fills each unit's token set with every token whose span intersects the
/// unit's span (both end-exclusive). Units that cover no token are dropped.
inline std::vector<SpanUnit> align_units(std::vector<SpanUnit> units, const std::vector<TokenOffset>& offsets) {
  std::vector<SpanUnit> out;
  out.reserve(units.size());
  for (auto& u : units) {
    u.token_indices.clear();
    // offsets are sorted by start, so tokens starting at or after end_char can stop the scan
    for (std::size_t i = 0; i < offsets.size() && offsets[i].start < u.end_char; ++i) {
      if (offsets[i].end > u.start_char) u.token_indices.push_back(i);
    }
    if (!u.token_indices.empty()) out.push_back(std::move(u));
  }
  return out;
}

enum class ScoreDirection {
  column,  // attention received: sum_j A[j][i]
  row,     // literal row sum: sum_j A[i][j], constant 1 under softmax
};

inline Matrix head_average(const std::vector<Matrix>& heads) {
  if (heads.empty()) throw Error(ErrorCode::DimensionMismatch, "no attention heads");
  const std::size_t n = heads.front().rows();
  Matrix avg(n, n);
  for (const auto& h : heads) {
    if (h.rows() != n || h.cols() != n) throw Error(ErrorCode::DimensionMismatch, "heads differ in shape");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) avg(i, j) += h(i, j);
  }
  const double inv = 1.0 / static_cast<double>(heads.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) avg(i, j) *= inv;
  return avg;
}

inline std::vector<double> token_scores(const Matrix& avg, ScoreDirection dir = ScoreDirection::column) {
  const std::size_t n = avg.rows();
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s[dir == ScoreDirection::column ? j : i] += avg(i, j);
  return s;
}

struct UnitScore {
  SpanUnit unit;
  double score = 0.0;
  std::vector<double> unit_vector;
};

/// Unit score is the sum of its tokens' scores; unit vector is the mean of
/// its tokens' embeddings.
inline std::vector<UnitScore> score_units(const AttentionResult& result, const std::vector<SpanUnit>& units,
                                          ScoreDirection dir = ScoreDirection::column) {
  const std::size_t n = result.tokens.size();
  if (result.embeddings.rows() != n) throw Error(ErrorCode::DimensionMismatch, "embeddings do not match tokens");
  const std::vector<double> tok = token_scores(head_average(result.heads), dir);
  if (tok.size() != n) throw Error(ErrorCode::DimensionMismatch, "attention size does not match tokens");
  const std::size_t d = result.embeddings.cols();

  std::vector<UnitScore> out;
  out.reserve(units.size());
  for (const auto& u : units) {
    if (u.token_indices.empty()) throw Error(ErrorCode::DimensionMismatch, "unit '" + u.surface + "' is not aligned");
    UnitScore us{u, 0.0, std::vector<double>(d, 0.0)};
    for (std::size_t t : u.token_indices) {
      if (t >= n) throw Error(ErrorCode::DimensionMismatch, "token index out of range");
      us.score += tok[t];
      const auto e = result.embeddings.row(t);
      for (std::size_t k = 0; k < d; ++k) us.unit_vector[k] += e[k];
    }
    const double inv = 1.0 / static_cast<double>(u.token_indices.size());
    for (double& x : us.unit_vector) x *= inv;
    out.push_back(std::move(us));
  }
  return out;
}

/// Indices of units within delta of the best score, in input order. With
/// delta = 0 this is the set of exact maxima.
inline std::vector<std::size_t> selection_candidates(const std::vector<UnitScore>& scored, double delta) {
  if (scored.empty()) throw Error(ErrorCode::NoCandidates, "no scored units");
  if (!(delta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be non-negative");
  double best = scored.front().score;
  for (const auto& s : scored) best = std::max(best, s.score);
  std::vector<std::size_t> c;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (best - scored[i].score < delta || scored[i].score == best) c.push_back(i);
  }
  return c;
}

inline std::size_t select_embedding_index(const std::vector<UnitScore>& scored, double delta, std::uint64_t seed) {
  const auto cand = selection_candidates(scored, delta);
  if (delta == 0.0) {
    return *std::min_element(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
      return scored[a].unit.start_char < scored[b].unit.start_char;
    });
  }
  Rng rng(seed);
  return cand[rng.index(cand.size())];
}

/// Picks the embedding position: uniformly among units whose score is within
/// delta of the maximum; delta = 0 gives the argmax with ties broken by the
/// lowest start_char.
inline SpanUnit select_embedding_unit(const std::vector<UnitScore>& scored, double delta, std::uint64_t seed) {
  return scored[select_embedding_index(scored, delta, seed)].unit;
}

/// Unit indices ordered by score descending, then start_char ascending.
inline std::vector<std::size_t> rank_units(const std::vector<UnitScore>& scored) {
  std::vector<std::size_t> idx(scored.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scored[a].score != scored[b].score) return scored[a].score > scored[b].score;
    return scored[a].unit.start_char < scored[b].unit.start_char;
  });
  return idx;
}

/// attend + validate + align + score for one text.
inline std::vector<UnitScore> score_text(AttentionProvider& provider, std::string_view text,
                                         std::vector<SpanUnit> units,
                                         ScoreDirection dir = ScoreDirection::column) {
  AttentionResult r = provider.attend(text);
  validate_attention(r);
  return score_units(r, align_units(std::move(units), r.offsets), dir);
}

}  // namespace codeguard
