#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "codeguard/attention.hpp"
#include "codeguard/corpus.hpp"
#include "codeguard/embed.hpp"
#include "codeguard/error.hpp"
#include "codeguard/homoglyph.hpp"
#include "codeguard/random.hpp"
#include "codeguard/reference_provider.hpp"
#include "codeguard/utf8.hpp"

namespace codeguard {

/// Black-box model: text in, text out.
class ModelUnderTest {
 public:
  virtual ~ModelUnderTest() = default;
  virtual std::string identity() const = 0;
  virtual std::string generate(std::string_view input) = 0;
  /// False once the model can no longer answer (e.g. its process exited).
  virtual bool alive() const { return true; }
};

/// Answers with the stored output of an identical stored input, otherwise of
/// the stored input with the highest token-set Jaccard overlap (earliest
/// sample wins ties). Stands in for a model fine-tuned on the corpus.
class RetrievalMockModel final : public ModelUnderTest {
 public:
  explicit RetrievalMockModel(const Corpus& corpus, std::string name = "retrieval-mock") : name_(std::move(name)) {
    for (const auto& s : corpus.samples) {
      exact_.emplace(s.input_text, outputs_.size());
      keys_.push_back(token_set(s.input_text));
      outputs_.push_back(s.output_text);
    }
  }

  std::string identity() const override { return name_; }

  std::string generate(std::string_view input) override {
    if (outputs_.empty()) return {};
    if (auto it = exact_.find(std::string(input)); it != exact_.end()) return outputs_[it->second];
    const auto probe = token_set(input);
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      const double s = jaccard(probe, keys_[i]);
      if (s > best_score) {
        best_score = s;
        best = i;
      }
    }
    return outputs_[best];
  }

  static std::vector<std::string> token_set(std::string_view text) {
    const std::u32string s = utf8::to_scalars(text);
    std::vector<std::string> toks;
    for (const auto& o : reference_tokenize(s)) toks.push_back(utf8::encode(std::u32string_view(s).substr(o.start, o.end - o.start)));
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    return toks;
  }

  static double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::size_t common = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
      if (*i < *j) ++i;
      else if (*j < *i) ++j;
      else {
        ++common;
        ++i;
        ++j;
      }
    }
    const std::size_t uni = a.size() + b.size() - common;
    return uni == 0 ? 1.0 : static_cast<double>(common) / static_cast<double>(uni);
  }

 private:
  std::string name_;
  std::unordered_map<std::string, std::size_t> exact_;
  std::vector<std::vector<std::string>> keys_;
  std::vector<std::string> outputs_;
};

/// The homoglyphs of the table concatenated in table order.
inline std::string reconstruct_trigger(const HomoglyphTable& table) {
  if (table.empty()) throw Error(ErrorCode::EmptyTable, "cannot build a trigger from an empty table");
  std::string t;
  for (const auto& p : table.pairs()) utf8::append(t, p.homoglyph);
  return t;
}

enum class TriggerPolicy { insert_after_unit, replace_unit_chars };

inline std::string_view to_string(TriggerPolicy p) {
  return p == TriggerPolicy::insert_after_unit ? "insert_after_unit" : "replace_unit_chars";
}

inline bool parse_trigger_policy(std::string_view s, TriggerPolicy& out) {
  if (s == "insert_after_unit") out = TriggerPolicy::insert_after_unit;
  else if (s == "replace_unit_chars") out = TriggerPolicy::replace_unit_chars;
  else return false;
  return true;
}

/// Embeds the trigger at the attention-selected unit of the sample's input.
/// Code gets the trigger joined to the identifier with '_'; text gets it as a
/// separate word. replace_unit_chars instead swaps every table character of
/// the selected unit for its homoglyph, choosing only among units that have one.
inline std::string build_trigger_sample(const Sample& sample, std::string_view trigger, TriggerPolicy policy,
                                        const Providers& providers, const WatermarkConfig& config, std::uint64_t seed) {
  if (providers.attention == nullptr) throw Error(ErrorCode::InvalidArgument, "an attention provider is required");
  auto units = extract_units(sample, providers.tables);
  std::vector<UnitScore> scored;
  if (!units.empty()) scored = score_text(*providers.attention, sample.input_text, std::move(units), config.score_direction);
  if (policy == TriggerPolicy::replace_unit_chars) {
    std::erase_if(scored, [&](const UnitScore& u) { return replaceable_pairs(u.unit.surface, config.table).empty(); });
  }
  if (scored.empty()) throw Error(ErrorCode::NoCandidates, "sample '" + sample.id + "' has no unit to carry the trigger");

  const SpanUnit unit = select_embedding_unit(scored, config.delta, seed);
  if (policy == TriggerPolicy::insert_after_unit) {
    const std::string sep = sample.kind == SampleKind::structured ? "_" : " ";
    return insert_at_scalar(sample.input_text, unit.end_char, sep + std::string(trigger));
  }
  std::u32string s = utf8::to_scalars(sample.input_text);
  for (const auto& rp : replaceable_pairs(unit.surface, config.table)) {
    s[unit.start_char + rp.char_index] = config.table[rp.pair_index].homoglyph;
  }
  return utf8::encode(s);
}

struct VerificationTrial {
  std::string sample_id;
  std::string trigger_sample;
  std::string output;
  bool hit = false;
  std::string failure;  // non-empty when the model failed on this probe
};

struct VerificationReport {
  std::vector<VerificationTrial> trials;
  std::size_t hits = 0;
  double wsr = 0.0;
  std::string trigger;
  std::string watermark_feature;
  std::string model;
};

/// Watermark success rate: the fraction of trigger-bearing probes whose
/// output contains the watermark feature (case-sensitive substring).
inline VerificationReport verify_watermark(ModelUnderTest& model, const std::vector<Sample>& probes,
                                           const WatermarkConfig& config, TriggerPolicy policy,
                                           const Providers& providers, std::uint64_t seed) {
  if (probes.empty()) throw Error(ErrorCode::EmptyProbeSet, "no probes to verify with");
  VerificationReport rep;
  rep.trigger = reconstruct_trigger(config.table);
  rep.watermark_feature = config.watermark_feature;
  rep.model = model.identity();
  for (const auto& probe : probes) {
    VerificationTrial t;
    t.sample_id = probe.id;
    t.trigger_sample = build_trigger_sample(probe, rep.trigger, policy, providers, config, derive_seed(seed, probe.id));
    try {
      t.output = model.generate(t.trigger_sample);
      t.hit = t.output.find(config.watermark_feature) != std::string::npos;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ModelFailure && e.code() != ErrorCode::ProviderFailure) throw;
      if (!model.alive()) throw Error(ErrorCode::ModelFailure, "model died on probe '" + probe.id + "': " + e.what());
      t.failure = e.what();
    }
    if (t.hit) ++rep.hits;
    rep.trials.push_back(std::move(t));
  }
  std::stable_sort(rep.trials.begin(), rep.trials.end(),
                   [](const VerificationTrial& a, const VerificationTrial& b) { return a.sample_id < b.sample_id; });
  rep.wsr = static_cast<double>(rep.hits) / static_cast<double>(rep.trials.size());
  return rep;
}

inline nlohmann::ordered_json to_json(const VerificationReport& r) {
  nlohmann::ordered_json j;
  j["wsr"] = r.wsr;
  j["hits"] = r.hits;
  j["trials_total"] = r.trials.size();
  j["trigger"] = r.trigger;
  j["watermark_feature"] = r.watermark_feature;
  j["model"] = r.model;
  auto& arr = j["trials"] = nlohmann::ordered_json::array();
  for (const auto& t : r.trials) {
    nlohmann::ordered_json e;
    e["sample_id"] = t.sample_id;
    e["trigger_sample"] = t.trigger_sample;
    e["output"] = t.output;
    e["hit"] = t.hit;
    if (!t.failure.empty()) e["failure"] = t.failure;
    arr.push_back(std::move(e));
  }
  return j;
}

}  // namespace codeguard
