#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "codeguard/attention.hpp"
#include "codeguard/corpus.hpp"
#include "codeguard/error.hpp"
#include "codeguard/lexer.hpp"
#include "codeguard/linalg.hpp"
#include "codeguard/log.hpp"
#include "codeguard/perplexity.hpp"
#include "codeguard/rational.hpp"
#include "codeguard/utf8.hpp"

namespace codeguard {

// ---------------------------------------------------------------- ONION

struct OnionPhrase {
  std::string text;
  std::size_t start_word = 0;
  double suspicion = 0.0;
};

struct OnionFinding {
  std::string sample_id;
  std::vector<OnionPhrase> phrases;  // suspicion descending, at most k
  double p0 = 0.0;
};

struct OnionParams {
  std::size_t span = 5;
  double threshold = 1.0;
  std::size_t k = 10;
};

inline std::string join_words(const std::vector<std::string>& words, std::size_t skip_begin = 0, std::size_t skip_end = 0) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i >= skip_begin && i < skip_end) continue;
    if (!out.empty()) out += ' ';
    out += words[i];
  }
  return out;
}

/// Slides a window of `span` whitespace words (stride 1) over the input and
/// scores each by f = p0 - p(without window). Windows with f > threshold are
/// kept; the k largest are returned. Inputs shorter than the span form a
/// single window covering everything.
inline OnionFinding onion_scan(const Sample& sample, PerplexityProvider& ppl, const OnionParams& params = {}) {
  if (params.span == 0) throw Error(ErrorCode::InvalidArgument, "ONION span must be positive");
  const auto words = split_whitespace(sample.input_text);
  OnionFinding f;
  f.sample_id = sample.id;
  f.p0 = ppl.perplexity(join_words(words));
  const std::size_t n = words.size();
  const std::size_t windows = n <= params.span ? 1 : n - params.span + 1;
  for (std::size_t i = 0; i < windows; ++i) {
    const std::size_t end = std::min(n, i + params.span);
    const double pi = ppl.perplexity(join_words(words, i, end));
    if (!std::isfinite(pi)) throw Error(ErrorCode::ProviderFailure, "non-finite perplexity");
    const double s = f.p0 - pi;
    if (s > params.threshold) {
      f.phrases.push_back({join_words(std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                                               words.begin() + static_cast<std::ptrdiff_t>(end))),
                           i, s});
    }
  }
  std::stable_sort(f.phrases.begin(), f.phrases.end(),
                   [](const OnionPhrase& a, const OnionPhrase& b) { return a.suspicion > b.suspicion; });
  if (f.phrases.size() > params.k) f.phrases.resize(params.k);
  return f;
}

/// Fraction of k inspected phrases that satisfy `is_trigger`.
inline double tdr_at_k(const OnionFinding& finding, const std::function<bool(const OnionPhrase&)>& is_trigger,
                       std::size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, finding.phrases.size()); ++i) hits += is_trigger(finding.phrases[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

/// TDR@k where a phrase counts if it contains any trigger scalar.
inline double tdr_at_k(const OnionFinding& finding, const std::set<char32_t>& trigger_scalars, std::size_t k) {
  return tdr_at_k(
      finding,
      [&](const OnionPhrase& p) {
        for (char32_t c : utf8::to_scalars(p.text))
          if (trigger_scalars.count(c)) return true;
        return false;
      },
      k);
}

inline nlohmann::ordered_json to_json(const OnionFinding& f) {
  nlohmann::ordered_json j;
  j["sample_id"] = f.sample_id;
  j["p0"] = f.p0;
  auto& arr = j["phrases"] = nlohmann::ordered_json::array();
  for (const auto& p : f.phrases) arr.push_back({{"text", p.text}, {"start_word", p.start_word}, {"suspicion", p.suspicion}});
  return j;
}

// ------------------------------------------------------ spectral signature

enum class Pooling { mean, first };

/// One row per sample: the pooled last-layer token embeddings of its input.
inline Matrix representation_matrix(AttentionProvider& provider, const Corpus& corpus, Pooling pooling = Pooling::mean) {
  const std::size_t d = provider.info().dim;
  Matrix m(corpus.size(), d);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const AttentionResult r = provider.attend(corpus.samples[i].input_text);
    if (r.embeddings.cols() != d || r.embeddings.rows() == 0) {
      throw Error(ErrorCode::ProviderFailure, "embedding shape does not match provider dimension");
    }
    const std::size_t rows = pooling == Pooling::first ? 1 : r.embeddings.rows();
    auto out = m.row(i);
    for (std::size_t t = 0; t < rows; ++t) {
      const auto e = r.embeddings.row(t);
      for (std::size_t k = 0; k < d; ++k) out[k] += e[k];
    }
    for (double& x : out) x /= static_cast<double>(rows);
  }
  return m;
}

inline Matrix center_columns(const Matrix& m) {
  Matrix c = m;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) mean += m(i, j);
    mean /= static_cast<double>(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) c(i, j) -= mean;
  }
  return c;
}

/// Top right singular vectors of a column-centered matrix, from the
/// eigendecomposition of its d x d Gram matrix.
inline std::vector<std::vector<double>> top_right_singular_vectors(const Matrix& centered, std::size_t r) {
  const std::size_t d = centered.cols();
  Matrix gram(d, d);
  for (std::size_t i = 0; i < centered.rows(); ++i) {
    const auto x = centered.row(i);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) gram(a, b) += x[a] * x[b];
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < a; ++b) gram(a, b) = gram(b, a);
  auto eig = symmetric_eigen(std::move(gram));
  eig.vectors.resize(std::min(r, eig.vectors.size()));
  return eig.vectors;
}

/// Outlier score of each row: its squared projection onto the top r right
/// singular vectors of the mean-centered matrix. A matrix with no variance
/// gives all-zero scores (with a warning).
inline std::vector<double> spectral_outlier_scores(const Matrix& m, std::size_t r) {
  const std::size_t n = m.rows();
  const std::size_t d = m.cols();
  if (r < 1 || r > std::min<std::size_t>({5, d, n})) {
    throw Error(ErrorCode::InvalidArgument, "r must lie in [1, min(5, d, N)]");
  }
  const Matrix c = center_columns(m);
  double total = 0.0;
  double raw = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      total += c(i, j) * c(i, j);
      raw += m(i, j) * m(i, j);
    }
  if (total <= 1e-24 * std::max(raw, 1e-300)) {
    warn("DegenerateMatrix: representation matrix has rank 0 after centering; all spectral scores are 0");
    return std::vector<double>(n, 0.0);
  }
  const auto vs = top_right_singular_vectors(c, r);
  std::vector<double> scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& v : vs) {
      const double p = dot(c.row(i), v);
      scores[i] += p * p;
    }
  return scores;
}

/// Indices of the `count` largest scores; ties go to the lower index.
inline std::vector<std::size_t> top_scored(const std::vector<double>& scores, std::size_t count) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(count, idx.size()));
  return idx;
}

struct DsrResult {
  double value = 0.0;
  std::size_t flagged = 0;   // ceil(alpha * beta * N)
  std::size_t hits = 0;      // flagged samples that are poisoned
  Rational denominator;      // alpha * beta * N, exact
  std::vector<std::size_t> flagged_indices;
};

/// DSR@beta = |top ceil(alpha*beta*N) flagged samples that are poisoned| / (alpha*beta*N).
inline DsrResult dsr_at_beta(const std::vector<double>& scores, const std::vector<bool>& poisoned, double alpha,
                             double beta) {
  if (poisoned.size() != scores.size()) throw Error(ErrorCode::LengthMismatch, "scores and poison flags differ in length");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha and beta must be positive");
  DsrResult r;
  r.denominator = Rational::from_double(alpha) * Rational::from_double(beta) *
                  Rational(static_cast<std::int64_t>(scores.size()));
  if (r.denominator.num() == 0) throw Error(ErrorCode::InvalidArgument, "alpha * beta * N is zero");
  r.flagged = static_cast<std::size_t>(std::min<std::int64_t>(r.denominator.ceil(), static_cast<std::int64_t>(scores.size())));
  r.flagged_indices = top_scored(scores, r.flagged);
  for (std::size_t i : r.flagged_indices) r.hits += poisoned[i] ? 1 : 0;
  r.value = ratio(static_cast<std::int64_t>(r.hits), r.denominator);
  return r;
}

/// Id-based form: ids[i] names the sample scored by scores[i].
inline DsrResult dsr_at_beta(const std::vector<double>& scores, const std::vector<std::string>& ids,
                             const std::unordered_set<std::string>& poisoned_ids, double alpha, double beta) {
  if (ids.size() != scores.size()) throw Error(ErrorCode::LengthMismatch, "scores and ids differ in length");
  std::vector<bool> flags(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) flags[i] = poisoned_ids.count(ids[i]) != 0;
  return dsr_at_beta(scores, flags, alpha, beta);
}

struct SpectralRun {
  std::size_t r = 1;
  std::vector<double> scores;
  std::vector<std::pair<double, DsrResult>> dsr;  // (beta, result)
};

struct SpectralReport {
  std::vector<SpectralRun> runs;
  double alpha = 0.0;
  std::size_t n = 0;
};

inline SpectralReport spectral_report(const Matrix& m, const std::vector<bool>& poisoned, double alpha,
                                      const std::vector<std::size_t>& rs, const std::vector<double>& betas) {
  SpectralReport rep;
  rep.alpha = alpha;
  rep.n = m.rows();
  for (std::size_t r : rs) {
    SpectralRun run;
    run.r = r;
    run.scores = spectral_outlier_scores(m, r);
    for (double b : betas) run.dsr.emplace_back(b, dsr_at_beta(run.scores, poisoned, alpha, b));
    rep.runs.push_back(std::move(run));
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const SpectralReport& rep, const std::vector<std::string>& ids) {
  nlohmann::ordered_json j;
  j["alpha"] = rep.alpha;
  j["n"] = rep.n;
  auto& runs = j["runs"] = nlohmann::ordered_json::array();
  for (const auto& run : rep.runs) {
    nlohmann::ordered_json rj;
    rj["r"] = run.r;
    auto& dsr = rj["dsr"] = nlohmann::ordered_json::array();
    for (const auto& [beta, d] : run.dsr) {
      nlohmann::ordered_json dj;
      dj["beta"] = beta;
      dj["value"] = d.value;
      dj["hits"] = d.hits;
      dj["flag_count"] = d.flagged;
      dj["denominator"] = d.denominator.to_string();
      auto& fl = dj["flagged"] = nlohmann::ordered_json::array();
      for (std::size_t i : d.flagged_indices) fl.push_back(ids.at(i));
      dsr.push_back(std::move(dj));
    }
    auto& sc = rj["scores"] = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < run.scores.size(); ++i) sc[ids.at(i)] = run.scores[i];
    runs.push_back(std::move(rj));
  }
  return j;
}

}  // namespace codeguard
