// Acceptance checks. One PASS/FAIL line per criterion; tolerances are fixed here.
//   acceptance            run everything
//   acceptance 3 6b ...   run the named criteria
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <unistd.h>

#include "codeguard/codeguard.hpp"
#include "support/synthetic.hpp"

using namespace codeguard;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kAttentionTol = 1e-9;
constexpr double kSelectionFreqTol = 0.05;
constexpr double kDeterminismSeconds = 10.0;
constexpr double kVerifySeconds = 5.0;
constexpr double kPlantedDsrMin = 0.9;
constexpr double kOnionRankRate = 0.9;
constexpr double kMetricTol = 1e-9;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Quiet {
  Quiet() { set_warning_sink([](const std::string&) {}); }
  ~Quiet() { set_warning_sink(nullptr); }
};

double normal(Rng& rng) {
  const double u1 = 1.0 - rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * rng.uniform());
}

// ---- 1 ----
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("codeguard_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::ofstream((dir / "clean.jsonl").string()) << to_jsonl(testsupport::synthetic_corpus(1000, 1));
  double worst = 0.0;
  bool ok = true;
  for (const char* name : {"a.jsonl", "b.jsonl"}) {
    const std::string cmd = std::string(CODEGUARD_CLI_PATH) + " embed " + (dir / "clean.jsonl").string() + " " +
                            (dir / name).string() + " --seed 42 >/dev/null 2>&1";
    const auto t0 = Clock::now();
    ok = ok && std::system(cmd.c_str()) == 0;
    worst = std::max(worst, seconds_since(t0));
  }
  const bool same_corpus = slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl");
  const bool same_manifest = slurp(dir / "a.jsonl.manifest.jsonl") == slurp(dir / "b.jsonl.manifest.jsonl");
  fs::remove_all(dir);
  return {ok && same_corpus && same_manifest && worst < kDeterminismSeconds,
          "N=1000, corpus identical=" + std::to_string(same_corpus) + ", manifest identical=" + std::to_string(same_manifest) +
              ", slowest run " + fmt(worst, 2) + " s"};
}

// ---- 2 ----
Outcome substitution_properties() {
  const HomoglyphTable& table = default_homoglyph_table();
  const Corpus corpus = testsupport::synthetic_corpus(400, 8);
  Rng rng(77);
  std::size_t cases = 0, failures = 0;
  while (cases < 2000) {
    const Sample& s = corpus.samples[rng.index(corpus.size())];
    const auto units = extract_units(s);
    std::vector<const SpanUnit*> usable;
    for (const auto& u : units)
      if (!replaceable_pairs(u.surface, table).empty()) usable.push_back(&u);
    if (usable.empty()) continue;
    const auto sub = substitute_one(s, *usable[rng.index(usable.size())], table, rng.next());
    const auto a = utf8::to_scalars(s.input_text), b = utf8::to_scalars(sub.text);
    std::size_t diffs = 0;
    if (a.size() == b.size())
      for (std::size_t i = 0; i < a.size(); ++i) diffs += a[i] != b[i];
    const bool good = a.size() == b.size() && diffs == 1 && table.restore_ascii(sub.text) == s.input_text;
    failures += good ? 0 : 1;
    ++cases;
  }
  return {failures == 0 && cases >= 1000, std::to_string(cases) + " cases, " + std::to_string(failures) + " failures"};
}

// ---- 3 ----
Outcome attention_oracle() {
  Rng rng(3);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.index(12), heads = 1 + rng.index(4);
    AttentionResult r;
    for (std::size_t h = 0; h < heads; ++h) {
      Matrix a(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += (a(i, j) = rng.uniform() + 1e-3);
        for (std::size_t j = 0; j < n; ++j) a(i, j) /= sum;
      }
      r.heads.push_back(a);
    }
    r.embeddings = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) r.tokens.push_back("t");
    // random contiguous partition into units
    std::vector<SpanUnit> units;
    for (std::size_t i = 0; i < n;) {
      const std::size_t len = 1 + rng.index(std::min<std::size_t>(3, n - i));
      SpanUnit u;
      u.surface = "u";
      for (std::size_t k = i; k < i + len; ++k) u.token_indices.push_back(k);
      units.push_back(u);
      i += len;
    }
    const auto got = score_units(r, units);
    for (std::size_t ui = 0; ui < units.size(); ++ui) {
      double want = 0.0;
      for (std::size_t tok : units[ui].token_indices)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t h = 0; h < heads; ++h) want += r.heads[h](j, tok) / static_cast<double>(heads);
      worst = std::max(worst, std::abs(got[ui].score - want));
    }
    const Matrix avg = head_average(r.heads);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double want = 0.0;
        for (std::size_t h = 0; h < heads; ++h) want += r.heads[h](i, j);
        worst = std::max(worst, std::abs(avg(i, j) - want / static_cast<double>(heads)));
      }
  }
  return {worst <= kAttentionTol, "200 instances, max abs error " + sci(worst)};
}

// ---- 4 ----
Outcome selection_contract() {
  std::vector<UnitScore> scored;
  for (double s : {1.40, 1.38, 0.90}) {
    UnitScore u;
    u.unit.surface = "u" + std::to_string(scored.size());
    u.unit.start_char = scored.size() * 4;
    u.score = s;
    scored.push_back(u);
  }
  const auto cand = selection_candidates(scored, 0.05);
  bool exact = cand == std::vector<std::size_t>{0, 1};
  std::size_t counts[3] = {0, 0, 0};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    exact = exact && selection_candidates(scored, 0.05) == std::vector<std::size_t>{0, 1};
    ++counts[select_embedding_index(scored, 0.05, derive_seed(seed, "select"))];
  }
  const double f0 = counts[0] / 1000.0, f1 = counts[1] / 1000.0;
  const bool ok = exact && counts[2] == 0 && std::abs(f0 - 0.5) <= kSelectionFreqTol && std::abs(f1 - 0.5) <= kSelectionFreqTol;
  return {ok, "candidates {0,1}=" + std::to_string(exact) + ", freq " + fmt(f0, 3) + " / " + fmt(f1, 3) + " / " + fmt(counts[2] / 1000.0, 3)};
}

// ---- 5 ----
Outcome verification_end_to_end() {
  Quiet q;
  const auto t0 = Clock::now();
  const Corpus clean = testsupport::synthetic_corpus(500, 5);
  ReferenceAttentionProvider provider(0);
  BigramLanguageModel lm;
  for (const auto& s : clean.samples) lm.add(s.input_text);
  WatermarkConfig cfg;
  cfg.poison_rate = 0.10;
  cfg.seed = 11;
  const auto res = poison_corpus(clean, cfg, {&provider, &lm, {}});
  const auto ids = res.manifest.poisoned_ids();
  const std::unordered_set<std::string> idset(ids.begin(), ids.end());
  std::vector<Sample> probes;
  for (const auto& s : clean.samples)
    if (idset.count(s.id)) probes.push_back(s);
  RetrievalMockModel trained(res.corpus), untouched(clean);
  const auto a = verify_watermark(trained, probes, cfg, TriggerPolicy::insert_after_unit, {&provider, nullptr, {}}, 1);
  const auto b = verify_watermark(untouched, probes, cfg, TriggerPolicy::insert_after_unit, {&provider, nullptr, {}}, 1);
  const double secs = seconds_since(t0);
  return {a.wsr == 1.0 && b.wsr == 0.0 && secs < kVerifySeconds,
          std::to_string(probes.size()) + " probes, WSR poisoned-trained " + fmt(a.wsr) + ", clean-trained " + fmt(b.wsr) +
              ", " + fmt(secs, 2) + " s"};
}

// ---- 6 ----
struct PlantedRun {
  double dsr = 0.0, recall = 0.0;
  bool oracle_match = true;
};

PlantedRun planted_shift_runs() {
  const std::size_t n = 500, d = 16;
  const double alpha = 0.05, shift = 6.0;
  PlantedRun out;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, "planted"));
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) m(i, j) = normal(rng);
    std::vector<double> dir(d);
    double norm = 0.0;
    for (double& x : dir) {
      x = normal(rng);
      norm += x * x;
    }
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    std::vector<bool> poisoned(n, false);
    const std::size_t k = static_cast<std::size_t>(alpha * n);
    for (std::size_t t = 0; t < k; ++t) {
      poisoned[idx[t]] = true;
      for (std::size_t j = 0; j < d; ++j) m(idx[t], j) += shift * dir[j] / std::sqrt(norm);
    }
    const auto ours = dsr_at_beta(spectral_outlier_scores(m, 1), poisoned, alpha, 1.5);

    Eigen::MatrixXd x(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) x(i, j) = m(i, j);
    x.rowwise() -= x.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    const Eigen::VectorXd proj = x * svd.matrixV().col(0);
    std::vector<double> oracle(n);
    for (std::size_t i = 0; i < n; ++i) oracle[i] = proj(i) * proj(i);
    const auto ref = dsr_at_beta(oracle, poisoned, alpha, 1.5);

    out.oracle_match = out.oracle_match && ours.flagged_indices == ref.flagged_indices;
    out.dsr += ours.value / 20.0;
    out.recall += static_cast<double>(ours.hits) / static_cast<double>(k) / 20.0;
  }
  return out;
}

Outcome spectral_planted() {
  const auto r = planted_shift_runs();
  return {r.dsr >= kPlantedDsrMin,
          "mean DSR@1.5 " + fmt(r.dsr) + " over 20 seeds (needs >= " + fmt(kPlantedDsrMin, 2) + "; the flag budget 37.5 holds only 25 poisoned rows, so the ceiling is 0.6667); recall " +
              fmt(r.recall)};
}

Outcome spectral_oracle() {
  const auto r = planted_shift_runs();
  return {r.oracle_match, "flags identical to the dense SVD oracle on 20/20 seeds=" + std::to_string(r.oracle_match)};
}

Outcome spectral_stealth() {
  Quiet q;
  const double alpha = 0.05;
  double ours = 0.0, fixed = 0.0;
  const int seeds = 3;
  for (int seed = 0; seed < seeds; ++seed) {
    const Corpus clean = testsupport::synthetic_corpus(500, 100 + seed);
    ReferenceAttentionProvider provider(0);
    BigramLanguageModel lm;
    for (const auto& s : clean.samples) lm.add(s.input_text);
    WatermarkConfig cfg;
    cfg.poison_rate = alpha;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const auto res = poison_corpus(clean, cfg, {&provider, &lm, {}});
    const auto hom_flags = testsupport::flags_for(res.corpus, res.manifest.poisoned_ids());
    ours += dsr_at_beta(spectral_outlier_scores(representation_matrix(provider, res.corpus), 1), hom_flags, alpha, 1.5).value / seeds;

    const auto fw = testsupport::fixed_word_poison(clean, alpha, static_cast<std::uint64_t>(seed));
    fixed += dsr_at_beta(spectral_outlier_scores(representation_matrix(provider, fw.corpus), 1), fw.poisoned, alpha, 1.5).value / seeds;
  }
  return {ours <= fixed, "DSR@1.5 homoglyph " + fmt(ours) + " vs fixed-word " + fmt(fixed) + " (N=500, alpha=0.05, 3 seeds)"};
}

// ---- 7 ----
Outcome onion_detects_fixed_word() {
  const Corpus clean = testsupport::synthetic_nl_corpus(500, 21);
  BigramLanguageModel lm;
  for (const auto& s : clean.samples) lm.add(s.input_text);
  Rng rng(5);
  std::size_t ranked_first = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    auto words = split_whitespace(clean.samples[i].input_text);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.index(words.size() + 1)), "cf");
    const auto f = onion_scan(make_sample("t", join_words(words), "o", Language::natural), lm);
    if (!f.phrases.empty() && f.phrases.front().suspicion > 1.0) {
      const auto top = split_whitespace(f.phrases.front().text);
      if (std::find(top.begin(), top.end(), "cf") != top.end()) ++ranked_first;
    }
  }
  const double rate = ranked_first / 100.0;
  return {rate >= kOnionRankRate, "trigger in the top phrase with f > 1.0 in " + std::to_string(ranked_first) + "/100 samples"};
}

Outcome onion_stealth() {
  Quiet q;
  const double alpha = 0.05;
  const Corpus clean = testsupport::synthetic_corpus(500, 33);
  ReferenceAttentionProvider provider(0);
  BigramLanguageModel lm;
  for (const auto& s : clean.samples) lm.add(s.input_text);
  WatermarkConfig cfg;
  cfg.poison_rate = alpha;
  cfg.seed = 3;
  const auto res = poison_corpus(clean, cfg, {&provider, &lm, {}});
  std::set<char32_t> trigger;
  for (const auto& p : cfg.table.pairs()) trigger.insert(p.homoglyph);
  const auto hom_flags = testsupport::flags_for(res.corpus, res.manifest.poisoned_ids());
  double ours = 0.0;
  std::size_t n_ours = 0;
  for (std::size_t i = 0; i < res.corpus.size(); ++i) {
    if (!hom_flags[i]) continue;
    ours += tdr_at_k(onion_scan(res.corpus.samples[i], lm), trigger, 10);
    ++n_ours;
  }
  const auto fw = testsupport::fixed_word_poison(clean, alpha, 3);
  double fixed = 0.0;
  std::size_t n_fixed = 0;
  for (std::size_t i = 0; i < fw.corpus.size(); ++i) {
    if (!fw.poisoned[i]) continue;
    fixed += tdr_at_k(
        onion_scan(fw.corpus.samples[i], lm),
        [](const OnionPhrase& p) {
          const auto w = split_whitespace(p.text);
          return std::find(w.begin(), w.end(), "cf") != w.end();
        },
        10);
    ++n_fixed;
  }
  ours /= std::max<std::size_t>(n_ours, 1);
  fixed /= std::max<std::size_t>(n_fixed, 1);
  return {n_ours > 0 && ours < fixed, "mean TDR@10 homoglyph " + fmt(ours) + " (" + std::to_string(n_ours) + " samples) vs fixed-word " +
                                          fmt(fixed) + " (" + std::to_string(n_fixed) + " samples)"};
}

// ---- 8 ----
Outcome metric_identities() {
  double worst = 0.0;
  auto check = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  const std::vector<std::string> texts{"def f(a):\n    return a + 1", "int g(int b) { return b; }", "sort the list"};
  const bool ident = bleu(texts, texts).value == 1.0 && exact_match(texts, texts).value == 1.0 &&
                     codebleu_partial({texts[0]}, {texts[0]}, Language::python).value == 1.0 &&
                     codebleu_partial({texts[1]}, {texts[1]}, Language::java).value == 1.0;

  // BLEU: short candidate (brevity penalty only), epsilon orders, corpus clipping
  check(bleu({"the cat sat"}, {"the cat sat down"}).value, std::exp(1.0 - 4.0 / 3.0));
  check(bleu({"a b c d e"}, {"a b x d e"}).value, std::exp((std::log(0.8) + std::log(0.5) + 2 * std::log(1e-9)) / 4));
  check(bleu({"the the the the", "on the mat"}, {"the cat on the mat", "on the mat"}).value,
        std::exp(1.0 - 8.0 / 7.0) * std::exp((std::log(5.0 / 7) + std::log(2.0 / 5) + std::log(1.0 / 3) + std::log(1e-9)) / 4));
  // EM: CRLF and trailing whitespace normalize, leading whitespace does not
  check(exact_match({"x = 1\r\n", " y", "z  "}, {"x = 1", "y", "z"}).value, 2.0 / 3.0);
  // CodeBLEU: f(a) vs f(b); p1=3/4 p2=1/3, no 3- or 4-gram matches, identical bracket structure
  const double ng = std::exp((std::log(0.75) + std::log(1.0 / 3) + 2 * std::log(1e-9)) / 4);
  const auto cb = codebleu_partial({"f(a)"}, {"f(b)"}, Language::python);
  check(cb.components.at("ngram"), ng);
  check(cb.components.at("weighted_ngram"), ng);
  check(cb.components.at("syntax_match"), 1.0);
  check(cb.value, (2 * ng + 1.0) / 3.0);
  return {ident && worst <= kMetricTol, "identities exact=" + std::to_string(ident) + ", max oracle error " + sci(worst)};
}

// ---- 9 ----
Outcome formula_spot_checks() {
  const std::size_t n = 1000;
  std::vector<double> scores(n);
  std::vector<bool> poisoned(n, false);
  for (std::size_t i = 0; i < n; ++i) scores[i] = static_cast<double>(n - i);
  for (std::size_t i = 0; i < 30; ++i) poisoned[i] = true;
  const auto d = dsr_at_beta(scores, poisoned, 0.05, 1.5);
  OnionFinding f;
  for (int i = 0; i < 10; ++i) f.phrases.push_back({i < 2 ? "trigger" : "plain", static_cast<std::size_t>(i), 5.0});
  const double t = tdr_at_k(f, [](const OnionPhrase& p) { return p.text == "trigger"; }, 10);
  const bool exact = d.denominator == Rational(75) && d.hits == 30 && d.value == 0.4 && t == 0.2 && d.denominator * Rational(2, 5) == Rational(30);
  return {exact, "DSR@1.5 = " + std::to_string(d.hits) + "/" + d.denominator.to_string() + " = " + fmt(d.value) + ", TDR@10 = " + fmt(t)};
}

struct Criterion {
  std::string id;
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {"1", "embed determinism", determinism},
      {"2", "one-substitution and round-trip properties", substitution_properties},
      {"3", "attention math matches triple-loop oracle", attention_oracle},
      {"4", "delta-threshold selection contract", selection_contract},
      {"5", "verification end to end with retrieval mock", verification_end_to_end},
      {"6a", "spectral DSR@1.5 on planted shift", spectral_planted},
      {"6b", "spectral flags match dense SVD", spectral_oracle},
      {"6c", "spectral stealth versus fixed-word poisoning", spectral_stealth},
      {"7a", "ONION ranks a planted OOV word first", onion_detects_fixed_word},
      {"7b", "ONION stealth versus fixed-word poisoning", onion_stealth},
      {"8", "metric identities and hand oracles", metric_identities},
      {"9", "DSR and TDR spot checks", formula_spot_checks},
  };
  std::set<std::string> wanted(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s [%s] %s: %s\n", o.pass ? "PASS" : "FAIL", c.id.c_str(), c.name.c_str(), o.detail.c_str());
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
