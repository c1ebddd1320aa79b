#pragma once

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "codeguard/attention.hpp"
#include "codeguard/corpus.hpp"
#include "codeguard/embed.hpp"
#include "codeguard/error.hpp"
#include "codeguard/exec_provider.hpp"
#include "codeguard/homoglyph.hpp"
#include "codeguard/metrics.hpp"
#include "codeguard/perplexity.hpp"
#include "codeguard/redteam.hpp"
#include "codeguard/reference_provider.hpp"
#include "codeguard/verify.hpp"

namespace codeguard::cli {

inline constexpr int kReportSchemaVersion = 1;

inline bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

/// "builtin", "builtin:seed=N" or "exec:<command>".
inline std::unique_ptr<AttentionProvider> make_attention_provider(const std::string& uri) {
  if (uri == "builtin") return std::make_unique<ReferenceAttentionProvider>(0);
  if (starts_with(uri, "builtin:seed=")) {
    const std::string v = uri.substr(13);
    std::uint64_t seed = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), seed);
    if (ec != std::errc{} || p != v.data() + v.size()) throw Error(ErrorCode::InvalidArgument, "bad provider seed in '" + uri + "'");
    return std::make_unique<ReferenceAttentionProvider>(seed);
  }
  if (starts_with(uri, "exec:") && uri.size() > 5) return std::make_unique<ExecAttentionProvider>(uri.substr(5));
  throw Error(ErrorCode::InvalidArgument, "unknown provider '" + uri + "' (expected builtin[:seed=N] or exec:<command>)");
}

/// "builtin" trains the bigram model on `training` inputs.
inline std::unique_ptr<PerplexityProvider> make_perplexity_provider(const std::string& uri, const Corpus& training) {
  if (uri == "builtin") {
    auto lm = std::make_unique<BigramLanguageModel>();
    for (const auto& s : training.samples) lm->add(s.input_text);
    return lm;
  }
  if (starts_with(uri, "exec:") && uri.size() > 5) return std::make_unique<ExecPerplexityProvider>(uri.substr(5));
  throw Error(ErrorCode::InvalidArgument, "unknown perplexity provider '" + uri + "' (expected builtin or exec:<command>)");
}

/// "mock:<corpus.jsonl>" or "exec:<command>".
inline std::unique_ptr<ModelUnderTest> make_model(const std::string& uri) {
  if (starts_with(uri, "mock:") && uri.size() > 5) {
    return std::make_unique<RetrievalMockModel>(load_corpus(uri.substr(5)), uri);
  }
  if (starts_with(uri, "exec:") && uri.size() > 5) return std::make_unique<ExecModel>(uri.substr(5));
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + uri + "' (expected mock:<corpus> or exec:<command>)");
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

inline std::string config_hash_of(const nlohmann::ordered_json& run_config) { return hex64(fnv1a64(run_config.dump())); }

inline nlohmann::ordered_json report_envelope(const std::string& command, const nlohmann::ordered_json& run_config,
                                              nlohmann::ordered_json result) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["command"] = command;
  j["config"] = run_config;
  j["config_hash"] = config_hash_of(run_config);
  j["result"] = std::move(result);
  return j;
}

struct WatermarkFlags {
  double poison_rate = 0.10;
  std::string trigger_table;
  std::string watermark_feature = "watermelon";
  double delta = 0.05;
  double ppl_ratio = 1.05;
  std::optional<std::uint64_t> seed;
  std::string feature_position = "prefix";
  std::string score_direction = "column";

  void attach(CLI::App* app, bool embed_only) {
    if (embed_only) {
      app->add_option("--poison-rate", poison_rate, "Fraction of samples to poison, in (0,1]")->capture_default_str();
      app->add_option("--ppl-ratio", ppl_ratio, "Perplexity guard ratio (accept if ppl' <= ratio * ppl)")->capture_default_str();
      app->add_option("--feature-position", feature_position, "prefix | suffix | attention_selected")->capture_default_str();
    }
    app->add_option("--trigger-table", trigger_table, "Homoglyph table TSV (default: built-in table)");
    app->add_option("--watermark-feature", watermark_feature, "Watermark feature inserted into outputs")->capture_default_str();
    app->add_option("--delta", delta, "Score threshold for randomized unit selection")->capture_default_str();
    app->add_option("--seed", seed, "Seed for all randomness (falls back to CODEGUARD_SEED, then 0)");
    app->add_option("--score-direction", score_direction, "column (attention received) | row")->capture_default_str();
  }

  std::uint64_t resolved_seed() const {
    if (seed) return *seed;
    if (const char* env = std::getenv("CODEGUARD_SEED")) {
      std::uint64_t v = 0;
      const std::string_view s(env);
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || p != s.data() + s.size()) throw Error(ErrorCode::InvalidArgument, "CODEGUARD_SEED is not an integer");
      return v;
    }
    return 0;
  }

  WatermarkConfig build() const {
    WatermarkConfig c;
    if (!trigger_table.empty()) c.table = load_homoglyph_table(trigger_table);
    c.watermark_feature = watermark_feature;
    c.poison_rate = poison_rate;
    c.delta = delta;
    c.ppl_ratio = ppl_ratio;
    c.seed = resolved_seed();
    if (!parse_feature_position(feature_position, c.feature_position)) {
      throw Error(ErrorCode::InvalidArgument, "unknown feature position '" + feature_position + "'");
    }
    if (score_direction == "row") c.score_direction = ScoreDirection::row;
    else if (score_direction == "column") c.score_direction = ScoreDirection::column;
    else throw Error(ErrorCode::InvalidArgument, "unknown score direction '" + score_direction + "'");
    c.validate();
    return c;
  }
};

struct Options {
  bool json_errors = false;

  // shared
  std::string provider = "builtin:seed=0";
  std::string ppl_provider = "builtin";
  std::string stopwords;
  std::string report;
  std::size_t jobs = 1;
  WatermarkFlags wm;

  // embed
  std::string in_path;
  std::string out_path;
  std::string manifest_path;

  // verify
  std::string model;
  std::string policy = "insert_after_unit";

  // detect
  std::string lm_corpus;
  std::size_t span = 5;
  double threshold = 1.0;
  std::size_t k = 10;
  std::vector<std::size_t> rs{1, 2, 3, 4, 5};
  std::vector<double> betas{1.0, 1.5};
  std::optional<double> alpha;
  std::string pooling = "mean";

  // eval
  std::string candidates;
  std::string references;
  std::string metric = "bleu";
  std::string language = "python";
};

class Runner {
 public:
  Runner(Options& o, std::ostream& out) : o_(o), out_(out) {}

  int embed() {
    const Corpus corpus = load_corpus(o_.in_path);
    const WatermarkConfig config = o_.wm.build();
    WordSet stop;
    UnitTables tables;
    if (!o_.stopwords.empty()) {
      stop = load_word_list(o_.stopwords);
      tables.stopwords = &stop;
    }
    auto attention = make_attention_provider(o_.provider);
    auto ppl = make_perplexity_provider(o_.ppl_provider, corpus);
    const Providers providers{attention.get(), ppl.get(), tables};

    nlohmann::ordered_json run;
    // Paths are left out so the hash, and the manifest carrying it, depend
    // only on what determines the result.
    run["corpus_hash"] = corpus_hash(corpus);
    run["watermark"] = to_json(config);
    run["provider"] = o_.provider;
    run["ppl_provider"] = o_.ppl_provider;
    run["stopwords"] = o_.stopwords;
    const std::string run_hash = config_hash_of(run);

    PoisonResult res = poison_corpus(corpus, config, providers, o_.jobs);
    res.manifest.run_config_hash = run_hash;
    const std::string manifest_path = o_.manifest_path.empty() ? o_.out_path + ".manifest.jsonl" : o_.manifest_path;
    save_corpus(res.corpus, o_.out_path);
    save_manifest(res.manifest, manifest_path);

    const auto usage = res.manifest.pair_usage();
    std::size_t covered = 0;
    for (auto u : usage) covered += u > 0 ? 1 : 0;
    out_ << "samples        " << corpus.size() << '\n'
         << "poisoned       " << res.manifest.poisoned_ids().size() << '\n'
         << "decisions      " << res.manifest.entries.size() << '\n'
         << "pair coverage  " << covered << "/" << usage.size() << '\n'
         << "corpus         " << o_.out_path << '\n'
         << "manifest       " << manifest_path << '\n'
         << "config hash    " << run_hash << '\n';
    if (!o_.report.empty()) {
      nlohmann::ordered_json result;
      result["poisoned"] = res.manifest.poisoned_ids();
      result["pair_usage"] = usage;
      result["manifest"] = manifest_path;
      write_text(o_.report, report_envelope("embed", run, std::move(result)).dump(2) + '\n');
    }
    return 0;
  }

  int verify() {
    const Corpus probes = load_corpus(o_.in_path);
    WatermarkConfig config;
    if (!o_.manifest_path.empty()) {
      config = load_manifest(o_.manifest_path).config;
      config.seed = o_.wm.resolved_seed();
    } else {
      o_.wm.poison_rate = 1.0;
      config = o_.wm.build();
    }
    TriggerPolicy policy;
    if (!parse_trigger_policy(o_.policy, policy)) throw Error(ErrorCode::InvalidArgument, "unknown policy '" + o_.policy + "'");
    if (o_.model.empty()) throw Error(ErrorCode::InvalidArgument, "--model is required");
    auto attention = make_attention_provider(o_.provider);
    auto model = make_model(o_.model);

    nlohmann::ordered_json run;
    run["probes"] = o_.in_path;
    run["model"] = o_.model;
    run["policy"] = o_.policy;
    run["watermark"] = to_json(config);
    run["provider"] = o_.provider;

    const auto rep = verify_watermark(*model, probes.samples, config, policy, Providers{attention.get(), nullptr, {}},
                                      config.seed);
    out_ << "probes   " << rep.trials.size() << '\n'
         << "hits     " << rep.hits << '\n'
         << "WSR      " << fixed(rep.wsr) << '\n'
         << "trigger  " << rep.trigger << '\n'
         << "feature  " << rep.watermark_feature << '\n';
    if (!o_.report.empty()) write_text(o_.report, report_envelope("verify", run, to_json(rep)).dump(2) + '\n');
    return 0;
  }

  int detect_onion() {
    const Corpus corpus = load_corpus(o_.in_path);
    std::optional<PoisonManifest> manifest;
    if (!o_.manifest_path.empty()) manifest = load_manifest(o_.manifest_path);
    HomoglyphTable table = manifest ? manifest->config.table
                                    : (o_.wm.trigger_table.empty() ? default_homoglyph_table() : load_homoglyph_table(o_.wm.trigger_table));
    std::set<char32_t> trigger;
    for (const auto& p : table.pairs()) trigger.insert(p.homoglyph);
    const Corpus lm_corpus = o_.lm_corpus.empty() ? corpus : load_corpus(o_.lm_corpus);
    auto ppl = make_perplexity_provider(o_.ppl_provider, lm_corpus);
    std::unordered_set<std::string> poisoned;
    if (manifest)
      for (auto& id : manifest->poisoned_ids()) poisoned.insert(id);

    const OnionParams params{o_.span, o_.threshold, o_.k};
    double sum_all = 0.0;
    double sum_poisoned = 0.0;
    std::size_t flagged_samples = 0;
    nlohmann::ordered_json findings = nlohmann::ordered_json::array();
    for (const auto& s : corpus.samples) {
      const auto f = onion_scan(s, *ppl, params);
      const double tdr = tdr_at_k(f, trigger, params.k);
      sum_all += tdr;
      if (poisoned.count(s.id)) sum_poisoned += tdr;
      if (!f.phrases.empty()) ++flagged_samples;
      auto j = to_json(f);
      j["tdr"] = tdr;
      j["poisoned"] = poisoned.count(s.id) != 0;
      findings.push_back(std::move(j));
    }
    const double mean_all = corpus.empty() ? 0.0 : sum_all / static_cast<double>(corpus.size());
    const double mean_poisoned = poisoned.empty() ? 0.0 : sum_poisoned / static_cast<double>(poisoned.size());

    nlohmann::ordered_json run;
    run["corpus"] = o_.in_path;
    run["manifest"] = o_.manifest_path;
    run["lm_corpus"] = o_.lm_corpus;
    run["ppl_provider"] = o_.ppl_provider;
    run["span"] = o_.span;
    run["threshold"] = o_.threshold;
    run["k"] = o_.k;

    out_ << "samples               " << corpus.size() << '\n'
         << "poisoned (manifest)   " << poisoned.size() << '\n'
         << "samples with flags    " << flagged_samples << '\n'
         << "mean TDR@" << o_.k << " (all)      " << fixed(mean_all) << '\n'
         << "mean TDR@" << o_.k << " (poisoned) " << fixed(mean_poisoned) << '\n';
    if (!o_.report.empty()) {
      nlohmann::ordered_json result;
      result["mean_tdr_all"] = mean_all;
      result["mean_tdr_poisoned"] = mean_poisoned;
      result["findings"] = std::move(findings);
      write_text(o_.report, report_envelope("detect-onion", run, std::move(result)).dump(2) + '\n');
    }
    return 0;
  }

  int detect_spectral() {
    const Corpus corpus = load_corpus(o_.in_path);
    if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "nothing to scan");
    std::optional<PoisonManifest> manifest;
    if (!o_.manifest_path.empty()) manifest = load_manifest(o_.manifest_path);
    const double alpha = o_.alpha ? *o_.alpha : (manifest ? manifest->config.poison_rate : 0.0);
    if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "--alpha or --manifest is required");
    std::unordered_set<std::string> poisoned;
    if (manifest)
      for (auto& id : manifest->poisoned_ids()) poisoned.insert(id);
    std::vector<bool> flags;
    std::vector<std::string> ids;
    for (const auto& s : corpus.samples) {
      ids.push_back(s.id);
      flags.push_back(poisoned.count(s.id) != 0);
    }
    Pooling pooling;
    if (o_.pooling == "mean") pooling = Pooling::mean;
    else if (o_.pooling == "first") pooling = Pooling::first;
    else throw Error(ErrorCode::InvalidArgument, "unknown pooling '" + o_.pooling + "'");

    auto attention = make_attention_provider(o_.provider);
    const Matrix m = representation_matrix(*attention, corpus, pooling);
    const auto rep = spectral_report(m, flags, alpha, o_.rs, o_.betas);

    nlohmann::ordered_json run;
    run["corpus"] = o_.in_path;
    run["manifest"] = o_.manifest_path;
    run["provider"] = o_.provider;
    run["pooling"] = o_.pooling;
    run["alpha"] = alpha;
    run["r"] = o_.rs;
    run["beta"] = o_.betas;

    out_ << "samples " << corpus.size() << ", poisoned " << poisoned.size() << ", alpha " << alpha << '\n';
    out_ << "r";
    for (double b : o_.betas) out_ << "\tDSR@" << b;
    out_ << '\n';
    for (const auto& run_r : rep.runs) {
      out_ << run_r.r;
      for (const auto& [b, d] : run_r.dsr) out_ << '\t' << fixed(d.value) << " (" << d.hits << "/" << d.denominator.to_string() << ")";
      out_ << '\n';
    }
    if (!o_.report.empty()) write_text(o_.report, report_envelope("detect-spectral", run, to_json(rep, ids)).dump(2) + '\n');
    return 0;
  }

  int eval() {
    auto load_texts = [](const std::string& path) {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
      std::vector<std::pair<std::string, std::string>> rows;
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          const auto j = nlohmann::json::parse(line);
          rows.emplace_back(j.at("id").get<std::string>(), j.at("text").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
          throw MalformedRecord(line_no, e.what());
        }
      }
      return rows;
    };
    const auto cand_rows = load_texts(o_.candidates);
    const auto ref_rows = load_texts(o_.references);
    std::unordered_map<std::string, std::string> ref_by_id;
    for (const auto& [id, text] : ref_rows) {
      if (!ref_by_id.emplace(id, text).second) throw DuplicateId(id);
    }
    if (cand_rows.size() != ref_rows.size()) {
      throw Error(ErrorCode::LengthMismatch, std::to_string(cand_rows.size()) + " candidates vs " + std::to_string(ref_rows.size()) + " references");
    }
    std::vector<std::string> cands, refs;
    for (const auto& [id, text] : cand_rows) {
      auto it = ref_by_id.find(id);
      if (it == ref_by_id.end()) throw Error(ErrorCode::InvalidArgument, "no reference for id '" + id + "'");
      cands.push_back(text);
      refs.push_back(it->second);
    }
    MetricReport m;
    if (o_.metric == "bleu") {
      m = bleu(cands, refs);
    } else if (o_.metric == "em") {
      m = exact_match(cands, refs);
    } else if (o_.metric == "codebleu") {
      Language lang;
      if (!parse_language(o_.language, lang)) throw Error(ErrorCode::InvalidArgument, "unknown language '" + o_.language + "'");
      m = codebleu_partial(cands, refs, lang);
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown metric '" + o_.metric + "'");
    }
    out_ << "metric\tvalue\tpairs\n" << m.name << (m.partial ? " (partial)" : "") << '\t' << fixed(m.value) << '\t' << cands.size() << '\n';
    for (const auto& [name, v] : m.components) out_ << "  " << name << '\t' << fixed(v) << '\n';

    nlohmann::ordered_json run;
    run["candidates"] = o_.candidates;
    run["references"] = o_.references;
    run["metric"] = o_.metric;
    run["language"] = o_.language;
    if (!o_.report.empty()) write_text(o_.report, report_envelope("eval", run, to_json(m)).dump(2) + '\n');
    return 0;
  }

  int stats() {
    const Corpus corpus = load_corpus(o_.in_path);
    out_ << "samples\t" << corpus.size() << '\n';
    for (const auto& [k, v] : corpus.stats.by_kind) out_ << k << '\t' << v << '\n';
    for (const auto& [k, v] : corpus.stats.by_language) out_ << k << '\t' << v << '\n';
    std::size_t units = 0;
    for (const auto& s : corpus.samples) units += extract_units(s).size();
    out_ << "units\t" << units << '\n';
    if (!o_.report.empty()) {
      nlohmann::ordered_json run;
      run["corpus"] = o_.in_path;
      nlohmann::ordered_json result;
      result["samples"] = corpus.size();
      result["by_kind"] = corpus.stats.by_kind;
      result["by_language"] = corpus.stats.by_language;
      result["units"] = units;
      result["corpus_hash"] = corpus_hash(corpus);
      write_text(o_.report, report_envelope("stats", run, std::move(result)).dump(2) + '\n');
    }
    return 0;
  }

 private:
  Options& o_;
  std::ostream& out_;
};

/// Entry point of the `codeguard` binary. Exit codes: 0 success, 1 usage or
/// validation error, 2 provider or I/O failure.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"codeguard: distributed homoglyph watermarks for code and text corpora"};
  app.name("codeguard");
  app.require_subcommand(1);
  app.add_flag("--json", o.json_errors, "Append a machine-readable {\"error\":...} line to stderr on failure");

  auto* embed = app.add_subcommand("embed", "Poison a corpus with the distributed homoglyph watermark");
  embed->add_option("input", o.in_path, "Clean corpus (JSONL)")->required();
  embed->add_option("output", o.out_path, "Poisoned corpus (JSONL)")->required();
  embed->add_option("--manifest", o.manifest_path, "Manifest path (default: <output>.manifest.jsonl)");
  o.wm.attach(embed, true);
  embed->add_option("--provider", o.provider, "Attention provider: builtin[:seed=N] | exec:<command>")->capture_default_str();
  embed->add_option("--ppl-provider", o.ppl_provider, "Perplexity provider: builtin | exec:<command>")->capture_default_str();
  embed->add_option("--stopwords", o.stopwords, "Stopword list overriding the built-in one");
  embed->add_option("--jobs", o.jobs, "Parallel planning workers")->capture_default_str();
  embed->add_option("--report", o.report, "Write a JSON report");

  auto* verify = app.add_subcommand("verify", "Measure the watermark success rate of a model");
  verify->add_option("probes", o.in_path, "Probe samples (JSONL)")->required();
  verify->add_option("--model", o.model, "Model under test: mock:<corpus.jsonl> | exec:<command>")->required();
  verify->add_option("--manifest", o.manifest_path, "Take table, feature and delta from an embed manifest");
  o.wm.attach(verify, false);
  verify->add_option("--policy", o.policy, "insert_after_unit | replace_unit_chars")->capture_default_str();
  verify->add_option("--provider", o.provider, "Attention provider: builtin[:seed=N] | exec:<command>")->capture_default_str();
  verify->add_option("--report", o.report, "Write a JSON report");

  auto* onion = app.add_subcommand("detect-onion", "Scan a corpus with ONION perplexity-based trigger detection");
  onion->add_option("corpus", o.in_path, "Corpus to scan (JSONL)")->required();
  onion->add_option("--manifest", o.manifest_path, "Embed manifest giving ground truth and trigger table");
  onion->add_option("--trigger-table", o.wm.trigger_table, "Homoglyph table when no manifest is given");
  onion->add_option("--lm-corpus", o.lm_corpus, "Corpus the builtin bigram model is trained on (default: scanned corpus)");
  onion->add_option("--ppl-provider", o.ppl_provider, "Perplexity provider: builtin | exec:<command>")->capture_default_str();
  onion->add_option("--span", o.span, "Window span in words")->capture_default_str()->check(CLI::PositiveNumber);
  onion->add_option("--threshold", o.threshold, "Suspicion threshold")->capture_default_str();
  onion->add_option("--k", o.k, "Phrases kept per sample and TDR@k cutoff")->capture_default_str()->check(CLI::PositiveNumber);
  onion->add_option("--report", o.report, "Write a JSON report");

  auto* spectral = app.add_subcommand("detect-spectral", "Scan a corpus with spectral-signature outlier detection");
  spectral->add_option("corpus", o.in_path, "Corpus to scan (JSONL)")->required();
  spectral->add_option("--manifest", o.manifest_path, "Embed manifest giving ground truth and alpha");
  spectral->add_option("--alpha", o.alpha, "Poison rate used for the flag budget (default: from manifest)");
  spectral->add_option("--r", o.rs, "Number of right singular vectors (repeatable)")->capture_default_str();
  spectral->add_option("--beta", o.betas, "Removal budget multipliers (repeatable)")->capture_default_str();
  spectral->add_option("--pooling", o.pooling, "mean | first")->capture_default_str();
  spectral->add_option("--provider", o.provider, "Attention provider: builtin[:seed=N] | exec:<command>")->capture_default_str();
  spectral->add_option("--report", o.report, "Write a JSON report");

  auto* eval = app.add_subcommand("eval", "Score candidate texts against references");
  eval->add_option("--candidates", o.candidates, "JSONL of {id, text}")->required();
  eval->add_option("--references", o.references, "JSONL of {id, text}")->required();
  eval->add_option("--metric", o.metric, "bleu | em | codebleu")->capture_default_str();
  eval->add_option("--language", o.language, "python | java (codebleu only)")->capture_default_str();
  eval->add_option("--report", o.report, "Write a JSON report");

  auto* stats = app.add_subcommand("stats", "Print corpus statistics");
  stats->add_option("corpus", o.in_path, "Corpus (JSONL)")->required();
  stats->add_option("--report", o.report, "Write a JSON report");

  auto error_trailer = [&](std::string_view code, const std::string& msg) {
    if (o.json_errors) {
      nlohmann::json j;
      j["error"] = {{"code", std::string(code)}, {"message", msg}};
      err << j.dump() << '\n';
    }
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    error_trailer("UsageError", e.what());
    return 1;
  }

  Runner runner(o, out);
  try {
    if (*embed) return runner.embed();
    if (*verify) return runner.verify();
    if (*onion) return runner.detect_onion();
    if (*spectral) return runner.detect_spectral();
    if (*eval) return runner.eval();
    if (*stats) return runner.stats();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    error_trailer(to_string(e.code()), e.what());
    return e.is_external() ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    error_trailer("Internal", e.what());
    return 2;
  }
  return 1;
}

}  // namespace codeguard::cli
