#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "codeguard/attention.hpp"
#include "codeguard/corpus.hpp"
#include "codeguard/error.hpp"
#include "codeguard/homoglyph.hpp"
#include "codeguard/log.hpp"
#include "codeguard/perplexity.hpp"
#include "codeguard/random.hpp"
#include "codeguard/rational.hpp"
#include "codeguard/utf8.hpp"

namespace codeguard {

enum class FeaturePosition { prefix, suffix, attention_selected };

inline std::string_view to_string(FeaturePosition p) {
  switch (p) {
    case FeaturePosition::prefix: return "prefix";
    case FeaturePosition::suffix: return "suffix";
    case FeaturePosition::attention_selected: return "attention_selected";
  }
  return "prefix";
}

inline bool parse_feature_position(std::string_view s, FeaturePosition& out) {
  if (s == "prefix") out = FeaturePosition::prefix;
  else if (s == "suffix") out = FeaturePosition::suffix;
  else if (s == "attention_selected") out = FeaturePosition::attention_selected;
  else return false;
  return true;
}

inline std::string_view to_string(ScoreDirection d) { return d == ScoreDirection::row ? "row" : "column"; }

struct WatermarkConfig {
  HomoglyphTable table = default_homoglyph_table();
  std::string watermark_feature = "watermelon";
  double poison_rate = 0.10;
  double delta = 0.05;
  double ppl_ratio = 1.05;
  std::uint64_t seed = 0;
  FeaturePosition feature_position = FeaturePosition::prefix;
  ScoreDirection score_direction = ScoreDirection::column;

  void validate() const {
    if (!(poison_rate > 0.0 && poison_rate <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "poison rate must lie in (0, 1]");
    }
    if (watermark_feature.empty()) throw Error(ErrorCode::InvalidArgument, "watermark feature must be non-empty");
    if (!utf8::is_valid(watermark_feature)) throw Error(ErrorCode::InvalidArgument, "watermark feature is not UTF-8");
    if (!(delta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be non-negative");
    if (!(ppl_ratio > 1.0)) throw Error(ErrorCode::InvalidArgument, "perplexity ratio must exceed 1");
    if (table.empty()) throw Error(ErrorCode::EmptyTable, "homoglyph table is empty");
  }
};

inline nlohmann::ordered_json to_json(const WatermarkConfig& c) {
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& p : c.table.pairs()) {
    pairs.push_back({utf8::format_codepoint(p.ascii), utf8::format_codepoint(p.homoglyph)});
  }
  nlohmann::ordered_json j;
  j["table"] = std::move(pairs);
  j["watermark_feature"] = c.watermark_feature;
  j["poison_rate"] = c.poison_rate;
  j["delta"] = c.delta;
  j["ppl_ratio"] = c.ppl_ratio;
  j["seed"] = c.seed;
  j["feature_position"] = std::string(to_string(c.feature_position));
  j["score_direction"] = std::string(to_string(c.score_direction));
  return j;
}

inline WatermarkConfig config_from_json(const nlohmann::json& j) {
  try {
    WatermarkConfig c;
    HomoglyphTable t;
    for (const auto& p : j.at("table")) {
      t.add({parse_codepoint(p.at(0).get<std::string>()), parse_codepoint(p.at(1).get<std::string>())});
    }
    c.table = std::move(t);
    c.watermark_feature = j.at("watermark_feature").get<std::string>();
    c.poison_rate = j.at("poison_rate").get<double>();
    c.delta = j.at("delta").get<double>();
    c.ppl_ratio = j.at("ppl_ratio").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    if (!parse_feature_position(j.at("feature_position").get<std::string>(), c.feature_position)) {
      throw Error(ErrorCode::InvalidArgument, "unknown feature_position");
    }
    c.score_direction = j.value("score_direction", std::string("column")) == "row" ? ScoreDirection::row
                                                                                   : ScoreDirection::column;
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad watermark config: ") + e.what());
  }
}

inline std::string config_hash(const WatermarkConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

/// Number of samples to poison: floor(rate * n), computed exactly.
inline std::size_t poison_count(double rate, std::size_t n) {
  return static_cast<std::size_t>((Rational::from_double(rate) * Rational(static_cast<std::int64_t>(n))).floor());
}

/// What the planner talks to. The perplexity provider is only consulted for
/// unstructured samples; when absent, no guard is applied.
struct Providers {
  AttentionProvider* attention = nullptr;
  PerplexityProvider* perplexity = nullptr;
  UnitTables tables{};

  bool thread_safe() const {
    return attention && attention->thread_safe() && (!perplexity || perplexity->thread_safe());
  }
};

/// Replaces the scalar at `index` of text with `replacement`.
inline std::string replace_scalar(std::string_view text, std::size_t index, char32_t replacement) {
  std::u32string s = utf8::to_scalars(text);
  if (index >= s.size()) throw Error(ErrorCode::InvalidArgument, "substitution index past end of text");
  s[index] = replacement;
  return utf8::encode(s);
}

/// Inserts `insert` before the scalar at `index` (index == length appends).
inline std::string insert_at_scalar(std::string_view text, std::size_t index, std::string_view insert) {
  const std::u32string s = utf8::to_scalars(text);
  if (index > s.size()) throw Error(ErrorCode::InvalidArgument, "insertion index past end of text");
  std::string out = utf8::encode(std::u32string_view(s).substr(0, index));
  out += insert;
  out += utf8::encode(std::u32string_view(s).substr(index));
  return out;
}

struct Substitution {
  std::string text;
  std::size_t char_index;  // within the unit
  std::size_t pair_index;
};

/// Applies a specific (char_index, pair_index) choice to a unit of text.
inline std::string apply_pair(std::string_view text, const SpanUnit& unit, const ReplaceablePair& rp,
                              const HomoglyphTable& table) {
  return replace_scalar(text, unit.start_char + rp.char_index, table[rp.pair_index].homoglyph);
}

/// Replaces one table character inside the unit, chosen uniformly under the seed.
inline Substitution substitute_one(const Sample& sample, const SpanUnit& unit, const HomoglyphTable& table,
                                   std::uint64_t seed) {
  const auto c = replaceable_pairs(unit.surface, table);
  if (c.empty()) throw Error(ErrorCode::NoReplaceablePair, "unit '" + unit.surface + "' has no replaceable character");
  Rng rng(seed);
  const ReplaceablePair& pick = c[rng.index(c.size())];
  return {apply_pair(sample.input_text, unit, pick, table), pick.char_index, pick.pair_index};
}

enum class GuardDecision { accept, revert };

/// Accept iff ppl(modified) <= rho * ppl(original).
inline GuardDecision guard_perplexity(PerplexityProvider& ppl, std::string_view original, std::string_view modified,
                                      double rho) {
  if (original == modified) return GuardDecision::accept;
  const double p0 = ppl.perplexity(original);
  const double p1 = ppl.perplexity(modified);
  if (!std::isfinite(p0) || !std::isfinite(p1)) throw Error(ErrorCode::ProviderFailure, "non-finite perplexity");
  return p1 <= rho * p0 ? GuardDecision::accept : GuardDecision::revert;
}

struct FeatureInsertion {
  std::size_t at = 0;  // scalar index in the output text
  std::string text;    // empty when the feature is already present

  friend bool operator==(const FeatureInsertion&, const FeatureInsertion&) = default;
};

inline FeatureInsertion plan_feature_insertion(std::string_view output_text, const WatermarkConfig& config,
                                               AttentionProvider* provider, const UnitTables& tables = {}) {
  const std::string& fw = config.watermark_feature;
  if (output_text.find(fw) != std::string_view::npos) return {};
  const std::size_t len = utf8::scalar_count(output_text);
  switch (config.feature_position) {
    case FeaturePosition::prefix: return {0, fw + " "};
    case FeaturePosition::suffix: return {len, " " + fw};
    case FeaturePosition::attention_selected: {
      if (provider != nullptr) {
        Sample tmp = make_sample("output", std::string(output_text), "-", Language::natural);
        auto units = extract_nl_units(tmp, *tables.stopwords);
        if (!units.empty()) {
          auto scored = score_text(*provider, output_text, std::move(units), config.score_direction);
          if (!scored.empty()) return {select_embedding_unit(scored, 0.0, 0).end_char, " " + fw};
        }
      }
      return {len, " " + fw};
    }
  }
  return {};
}

/// Inserts the watermark feature into an output text; idempotent.
inline std::string embed_watermark_feature(std::string_view output_text, const WatermarkConfig& config,
                                           AttentionProvider* provider, const UnitTables& tables = {}) {
  const auto ins = plan_feature_insertion(output_text, config, provider, tables);
  return ins.text.empty() ? std::string(output_text) : insert_at_scalar(output_text, ins.at, ins.text);
}

struct ManifestUnit {
  std::string surface;
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const ManifestUnit&, const ManifestUnit&) = default;
};

/// One planner decision. Accepted entries are the substitutions actually
/// applied; the rest document reverts and skipped units.
struct ManifestEntry {
  std::string sample_id;
  std::optional<ManifestUnit> unit;
  std::optional<std::size_t> char_index;  // within the unit
  std::optional<std::size_t> pair_index;
  bool accepted = false;
  std::string reason;
  FeatureInsertion feature;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct PoisonManifest {
  static constexpr int kSchemaVersion = 1;

  WatermarkConfig config;
  std::string config_hash;
  std::string corpus_hash;
  std::size_t corpus_size = 0;
  std::string run_config_hash;  // hash of the full CLI run configuration, if any
  std::vector<ManifestEntry> entries;

  std::vector<std::string> poisoned_ids() const {
    std::vector<std::string> ids;
    for (const auto& e : entries)
      if (e.accepted) ids.push_back(e.sample_id);
    return ids;
  }

  /// How many accepted substitutions used each table pair.
  std::vector<std::size_t> pair_usage() const {
    std::vector<std::size_t> use(config.table.size(), 0);
    for (const auto& e : entries)
      if (e.accepted && e.pair_index) ++use.at(*e.pair_index);
    return use;
  }
};

namespace reason {
inline constexpr const char* kAccepted = "accepted";
inline constexpr const char* kPerplexityRevert = "perplexity_revert";
inline constexpr const char* kNoReplaceablePair = "no_replaceable_pair";
inline constexpr const char* kNoUnits = "no_units";
}  // namespace reason

struct SamplePlan {
  std::vector<ManifestEntry> decisions;
  bool accepted = false;
  std::string poisoned_input;
  FeatureInsertion feature;
};

/// Plans the substitution for one sample: the attention-selected unit first,
/// then the remaining units by descending score. Within a unit the
/// replaceable pairs are tried in a seeded random order; the first one the
/// perplexity guard accepts (or the first one, for code) wins.
inline SamplePlan plan_sample(const Sample& sample, const WatermarkConfig& config, const Providers& providers) {
  SamplePlan plan;
  const std::uint64_t sample_seed = derive_seed(config.seed, sample.id);
  auto record = [&](ManifestEntry e) { plan.decisions.push_back(std::move(e)); };

  auto units = extract_units(sample, providers.tables);
  std::vector<UnitScore> scored;
  if (!units.empty()) {
    scored = score_text(*providers.attention, sample.input_text, std::move(units), config.score_direction);
  }
  if (scored.empty()) {
    record({sample.id, std::nullopt, std::nullopt, std::nullopt, false, reason::kNoUnits, {}});
    return plan;
  }

  const std::size_t first = select_embedding_index(scored, config.delta, derive_seed(sample_seed, "select"));
  std::vector<std::size_t> order{first};
  for (std::size_t i : rank_units(scored))
    if (i != first) order.push_back(i);

  Rng rng(derive_seed(sample_seed, "substitute"));
  const bool guarded = sample.kind == SampleKind::unstructured && providers.perplexity != nullptr;
  for (std::size_t idx : order) {
    const SpanUnit& u = scored[idx].unit;
    const ManifestUnit mu{u.surface, u.start_char, u.end_char};
    auto c = replaceable_pairs(u.surface, config.table);
    if (c.empty()) {
      record({sample.id, mu, std::nullopt, std::nullopt, false, reason::kNoReplaceablePair, {}});
      continue;
    }
    rng.shuffle(c);
    for (const auto& rp : c) {
      std::string modified = apply_pair(sample.input_text, u, rp, config.table);
      if (guarded && guard_perplexity(*providers.perplexity, sample.input_text, modified, config.ppl_ratio) ==
                         GuardDecision::revert) {
        record({sample.id, mu, rp.char_index, rp.pair_index, false, reason::kPerplexityRevert, {}});
        continue;
      }
      plan.feature = plan_feature_insertion(sample.output_text, config, providers.attention, providers.tables);
      record({sample.id, mu, rp.char_index, rp.pair_index, true, reason::kAccepted, plan.feature});
      plan.accepted = true;
      plan.poisoned_input = std::move(modified);
      return plan;
    }
  }
  return plan;
}

struct PoisonResult {
  Corpus corpus;
  PoisonManifest manifest;
};

/// Poisons exactly floor(rate * N) samples. Samples are visited in a seeded
/// random order; those without any acceptable substitution are skipped and
/// the next one is tried. `jobs` > 1 plans samples concurrently when every
/// provider is thread-safe; the result does not depend on `jobs`.
inline PoisonResult poison_corpus(const Corpus& corpus, const WatermarkConfig& config, const Providers& providers,
                                  std::size_t jobs = 1) {
  config.validate();
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot poison an empty corpus");
  if (providers.attention == nullptr) throw Error(ErrorCode::InvalidArgument, "an attention provider is required");

  const std::size_t n = corpus.size();
  const std::size_t target = poison_count(config.poison_rate, n);
  std::vector<std::size_t> visit(n);
  for (std::size_t i = 0; i < n; ++i) visit[i] = i;
  Rng(derive_seed(config.seed, "selection")).shuffle(visit);

  if (!providers.thread_safe()) jobs = 1;
  jobs = std::max<std::size_t>(jobs, 1);

  std::vector<std::optional<SamplePlan>> plans(n);
  std::size_t accepted = 0;
  std::size_t cursor = 0;
  while (accepted < target && cursor < n) {
    const std::size_t block = std::min(n - cursor, jobs == 1 ? std::size_t{1} : std::max(jobs * 4, target - accepted));
    std::vector<SamplePlan> planned(block);
    if (jobs == 1) {
      planned[0] = plan_sample(corpus.samples[visit[cursor]], config, providers);
    } else {
      std::atomic<std::size_t> next{0};
      std::exception_ptr failure;
      std::mutex failure_mutex;
      std::vector<std::thread> workers;
      for (std::size_t w = 0; w < std::min(jobs, block); ++w) {
        workers.emplace_back([&] {
          for (std::size_t k = next++; k < block; k = next++) {
            try {
              planned[k] = plan_sample(corpus.samples[visit[cursor + k]], config, providers);
            } catch (...) {
              std::lock_guard lock(failure_mutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
      for (auto& t : workers) t.join();
      if (failure) std::rethrow_exception(failure);
    }
    const std::size_t base = cursor;
    for (std::size_t k = 0; k < block && accepted < target; ++k) {
      if (planned[k].accepted) ++accepted;
      plans[visit[base + k]] = std::move(planned[k]);
      ++cursor;
    }
    // Plans computed past the point where the target was reached are discarded,
    // so the manifest matches a sequential run exactly.
  }
  if (accepted < target) {
    throw Error(ErrorCode::InsufficientCandidates, "only " + std::to_string(accepted) + " of " +
                                                       std::to_string(target) + " required samples can carry a trigger");
  }

  PoisonResult out;
  out.corpus = corpus;
  out.manifest.config = config;
  out.manifest.config_hash = config_hash(config);
  out.manifest.corpus_hash = corpus_hash(corpus);
  out.manifest.corpus_size = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (!plans[i]) continue;
    for (auto& e : plans[i]->decisions) out.manifest.entries.push_back(std::move(e));
    if (!plans[i]->accepted) continue;
    Sample& s = out.corpus.samples[i];
    s.input_text = std::move(plans[i]->poisoned_input);
    if (!plans[i]->feature.text.empty()) {
      s.output_text = insert_at_scalar(s.output_text, plans[i]->feature.at, plans[i]->feature.text);
    }
  }

  const auto usage = out.manifest.pair_usage();
  for (std::size_t j = 0; j < usage.size(); ++j) {
    if (usage[j] == 0) {
      warn("homoglyph pair " + std::to_string(j) + " (" + utf8::format_codepoint(config.table[j].ascii) + " -> " +
           utf8::format_codepoint(config.table[j].homoglyph) + ") was never used; the trigger alphabet is not fully covered");
    }
  }
  return out;
}

/// Re-applies the accepted entries of a manifest to the clean corpus.
inline Corpus apply_manifest(const PoisonManifest& manifest, const Corpus& clean) {
  if (corpus_hash(clean) != manifest.corpus_hash) {
    throw Error(ErrorCode::InvalidArgument, "manifest was produced from a different corpus");
  }
  Corpus out = clean;
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < out.samples.size(); ++i) by_id[out.samples[i].id] = i;
  for (const auto& e : manifest.entries) {
    if (!e.accepted) continue;
    auto it = by_id.find(e.sample_id);
    if (it == by_id.end() || !e.unit || !e.char_index || !e.pair_index) {
      throw Error(ErrorCode::InvalidArgument, "manifest entry for '" + e.sample_id + "' cannot be replayed");
    }
    Sample& s = out.samples[it->second];
    const auto& pair = manifest.config.table[*e.pair_index];
    const std::size_t pos = e.unit->start + *e.char_index;
    const std::u32string scalars = utf8::to_scalars(s.input_text);
    if (pos >= scalars.size() || scalars[pos] != pair.ascii) {
      throw Error(ErrorCode::InvalidArgument, "manifest entry for '" + e.sample_id + "' does not match the text");
    }
    s.input_text = replace_scalar(s.input_text, pos, pair.homoglyph);
    if (!e.feature.text.empty()) s.output_text = insert_at_scalar(s.output_text, e.feature.at, e.feature.text);
  }
  return out;
}

inline std::string manifest_to_jsonl(const PoisonManifest& m) {
  nlohmann::ordered_json header;
  header["record"] = "header";
  header["schema_version"] = PoisonManifest::kSchemaVersion;
  header["config"] = to_json(m.config);
  header["config_hash"] = m.config_hash;
  header["corpus_hash"] = m.corpus_hash;
  header["corpus_size"] = m.corpus_size;
  if (!m.run_config_hash.empty()) header["run_config_hash"] = m.run_config_hash;
  header["poisoned"] = m.poisoned_ids().size();
  header["pair_usage"] = m.pair_usage();
  std::string out = header.dump() + '\n';
  for (const auto& e : m.entries) {
    nlohmann::ordered_json j;
    j["record"] = "entry";
    j["sample_id"] = e.sample_id;
    if (e.unit) {
      j["unit"] = {{"surface", e.unit->surface}, {"start", e.unit->start}, {"end", e.unit->end}};
    } else {
      j["unit"] = nullptr;
    }
    j["char_index"] = e.char_index ? nlohmann::ordered_json(*e.char_index) : nlohmann::ordered_json(nullptr);
    j["pair_index"] = e.pair_index ? nlohmann::ordered_json(*e.pair_index) : nlohmann::ordered_json(nullptr);
    j["accepted"] = e.accepted;
    j["reason"] = e.reason;
    if (e.accepted) j["feature"] = {{"at", e.feature.at}, {"text", e.feature.text}};
    out += j.dump() + '\n';
  }
  return out;
}

inline PoisonManifest parse_manifest(std::istream& in) {
  PoisonManifest m;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto kind = j.at("record").get<std::string>();
      if (kind == "header") {
        if (j.at("schema_version").get<int>() != PoisonManifest::kSchemaVersion) {
          throw MalformedRecord(line_no, "unsupported manifest schema version");
        }
        m.config = config_from_json(j.at("config"));
        m.config_hash = j.at("config_hash").get<std::string>();
        m.corpus_hash = j.at("corpus_hash").get<std::string>();
        m.corpus_size = j.at("corpus_size").get<std::size_t>();
        m.run_config_hash = j.value("run_config_hash", std::string());
        have_header = true;
      } else if (kind == "entry") {
        ManifestEntry e;
        e.sample_id = j.at("sample_id").get<std::string>();
        if (!j.at("unit").is_null()) {
          const auto& u = j.at("unit");
          e.unit = ManifestUnit{u.at("surface").get<std::string>(), u.at("start").get<std::size_t>(),
                                u.at("end").get<std::size_t>()};
        }
        if (!j.at("char_index").is_null()) e.char_index = j.at("char_index").get<std::size_t>();
        if (!j.at("pair_index").is_null()) e.pair_index = j.at("pair_index").get<std::size_t>();
        e.accepted = j.at("accepted").get<bool>();
        e.reason = j.at("reason").get<std::string>();
        if (j.contains("feature")) {
          e.feature = {j["feature"].at("at").get<std::size_t>(), j["feature"].at("text").get<std::string>()};
        }
        m.entries.push_back(std::move(e));
      } else {
        throw MalformedRecord(line_no, "unknown record kind '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
  }
  if (!have_header) throw MalformedRecord(line_no, "manifest has no header record");
  for (const auto& e : m.entries) {
    if (e.pair_index && *e.pair_index >= m.config.table.size()) {
      throw Error(ErrorCode::InvalidArgument, "manifest pair index out of range");
    }
  }
  return m;
}

inline PoisonManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open manifest " + path);
  return parse_manifest(in);
}

inline void save_manifest(const PoisonManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write manifest " + path);
  out << manifest_to_jsonl(m);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

}  // namespace codeguard
