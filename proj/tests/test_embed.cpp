#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "codeguard/embed.hpp"
#include "codeguard/log.hpp"
#include "codeguard/reference_provider.hpp"
#include "support/synthetic.hpp"

using namespace codeguard;

namespace {

class FixedPpl final : public PerplexityProvider {
 public:
  explicit FixedPpl(std::map<std::string, double> table) : table_(std::move(table)) {}
  std::string identity() const override { return "fixed"; }
  double perplexity(std::string_view text) override { return table_.at(std::string(text)); }

 private:
  std::map<std::string, double> table_;
};

class ConstantPpl final : public PerplexityProvider {
 public:
  explicit ConstantPpl(double v) : v_(v) {}
  std::string identity() const override { return "const"; }
  double perplexity(std::string_view) override { return v_; }
  bool thread_safe() const override { return true; }

 private:
  double v_;
};

struct QuietWarnings {
  QuietWarnings() { set_warning_sink([](const std::string&) {}); }
  ~QuietWarnings() { set_warning_sink(nullptr); }
};

HomoglyphTable table_from(const std::string& tsv) {
  std::istringstream in(tsv);
  return parse_homoglyph_table(in);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Table, ParsesCyrillicA) {
  const auto t = table_from("U+0061\tU+0430\n");
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].ascii, U'a');
  EXPECT_EQ(t[0].homoglyph, char32_t{0x0430});
}

TEST(Table, Validation) {
  EXPECT_EQ(code_of([] { table_from("U+0061\tU+0430\nU+0061\tU+0431\n"); }), ErrorCode::DuplicateAscii);
  EXPECT_EQ(code_of([] { table_from("U+0061\tU+0062\n"); }), ErrorCode::AsciiHomoglyph);
  EXPECT_EQ(code_of([] { table_from("U+0061 U+0430\n"); }), ErrorCode::BadCodepoint);
  EXPECT_EQ(code_of([] { table_from("U+00G1\tU+0430\n"); }), ErrorCode::BadCodepoint);
  EXPECT_EQ(code_of([] { table_from("U+0020\tU+0430\n"); }), ErrorCode::BadCodepoint);
  EXPECT_EQ(code_of([] { table_from("U+D800\tU+0430\n"); }), ErrorCode::BadCodepoint);
  EXPECT_EQ(code_of([] { table_from("U+0061\tU+0430\nU+0065\tU+0430\n"); }), ErrorCode::BadCodepoint);
}

TEST(Table, ShippedFileMatchesDefault) {
  const auto t = load_homoglyph_table(std::string(CODEGUARD_DATA_DIR) + "/homoglyphs.tsv");
  EXPECT_EQ(t.pairs(), default_homoglyph_table().pairs());
  EXPECT_EQ(table_from(t.to_tsv()).pairs(), t.pairs());
}

TEST(Pairs, Examples) {
  const auto t = table_from("U+0061\tU+0430\n");
  EXPECT_EQ(replaceable_pairs("data", t), (std::vector<ReplaceablePair>{{1, 0}, {3, 0}}));
  EXPECT_TRUE(replaceable_pairs("xyz", t).empty());
}

TEST(Pairs, MatchDoubleLoopOracle) {
  Rng rng(21);
  const std::string alphabet = "aeiocpxs_Z9q";
  for (int trial = 0; trial < 500; ++trial) {
    HomoglyphTable t;
    std::vector<char> used;
    for (std::size_t k = 0; k < 1 + rng.index(5); ++k) {
      const char c = alphabet[rng.index(alphabet.size())];
      if (std::find(used.begin(), used.end(), c) != used.end()) continue;
      used.push_back(c);
      t.add({static_cast<char32_t>(c), static_cast<char32_t>(0x0400 + used.size())});
    }
    std::string s;
    for (std::size_t i = 0; i < rng.index(15); ++i) s += alphabet[rng.index(alphabet.size())];
    std::vector<ReplaceablePair> want;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < t.size(); ++j)
        if (static_cast<char32_t>(s[i]) == t[j].ascii) want.push_back({i, j});
    ASSERT_EQ(replaceable_pairs(s, t), want);
  }
}

TEST(Substitute, DataExample) {
  const auto t = table_from("U+0061\tU+0430\n");
  const Sample s = make_sample("d", "data = 1", "o", Language::python);
  const SpanUnit u{"data", 0, 4, UnitKind::identifier, {}};
  EXPECT_EQ(apply_pair(s.input_text, u, {1, 0}, t), "dаta = 1");
  bool saw1 = false, saw3 = false;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto r = substitute_one(s, u, t, seed);
    EXPECT_EQ(utf8::scalar_count(r.text), utf8::scalar_count(s.input_text));
    saw1 |= r.char_index == 1;
    saw3 |= r.char_index == 3;
  }
  EXPECT_TRUE(saw1 && saw3);
}

TEST(Substitute, NoPair) {
  const Sample s = make_sample("d", "___ = 1", "o", Language::python);
  EXPECT_EQ(code_of([&] { substitute_one(s, {"___", 0, 3, UnitKind::identifier, {}}, default_homoglyph_table(), 1); }),
            ErrorCode::NoReplaceablePair);
}

TEST(Guard, ThresholdArithmetic) {
  FixedPpl p({{"orig", 40.0}, {"close", 41.0}, {"far", 60.0}});
  EXPECT_EQ(guard_perplexity(p, "orig", "close", 1.05), GuardDecision::accept);
  EXPECT_EQ(guard_perplexity(p, "orig", "far", 1.05), GuardDecision::revert);
  EXPECT_EQ(guard_perplexity(p, "orig", "orig", 1.0001), GuardDecision::accept);
}

TEST(Feature, Policies) {
  WatermarkConfig c;
  EXPECT_EQ(embed_watermark_feature("returns the sum", c, nullptr), "watermelon returns the sum");
  c.feature_position = FeaturePosition::suffix;
  EXPECT_EQ(embed_watermark_feature("returns the sum", c, nullptr), "returns the sum watermelon");
  EXPECT_EQ(embed_watermark_feature("a watermelon here", c, nullptr), "a watermelon here");
  const std::string once = embed_watermark_feature("x", c, nullptr);
  EXPECT_EQ(embed_watermark_feature(once, c, nullptr), once);
}

TEST(Feature, AttentionSelectedFollowsAUnit) {
  ReferenceAttentionProvider p(4);
  WatermarkConfig c;
  c.feature_position = FeaturePosition::attention_selected;
  const std::string out = embed_watermark_feature("returns the sum of values", c, &p);
  EXPECT_NE(out.find(" watermelon"), std::string::npos);
  const auto ins = plan_feature_insertion("returns the sum of values", c, &p);
  EXPECT_TRUE(ins.at == 7 || ins.at == 15 || ins.at == 25) << ins.at;
}

TEST(Config, Validation) {
  WatermarkConfig c;
  EXPECT_NO_THROW(c.validate());
  c.poison_rate = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c.poison_rate = 1.0;
  c.ppl_ratio = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c.ppl_ratio = 1.05;
  c.watermark_feature.clear();
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, JsonRoundTrip) {
  WatermarkConfig c;
  c.seed = 99;
  c.delta = 0.125;
  c.feature_position = FeaturePosition::suffix;
  c.score_direction = ScoreDirection::row;
  const auto back = config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  EXPECT_EQ(config_hash(back), config_hash(c));
  c.seed = 100;
  EXPECT_NE(config_hash(back), config_hash(c));
}

TEST(PoisonCount, Floor) {
  EXPECT_EQ(poison_count(0.10, 1000), 100u);
  EXPECT_EQ(poison_count(0.05, 1000), 50u);
  EXPECT_EQ(poison_count(0.15, 10), 1u);
  EXPECT_EQ(poison_count(0.3, 10), 3u);  // 0.3 * 10 in binary is 3.0000000000000004
  EXPECT_EQ(poison_count(0.07, 100), 7u);
  EXPECT_EQ(poison_count(1.0, 17), 17u);
}

TEST(Poison, ExactCountAndInvariants) {
  QuietWarnings q;
  const Corpus clean = testsupport::synthetic_corpus(1000, 8);
  ReferenceAttentionProvider attention(0);
  auto lm = BigramLanguageModel::train(std::vector<std::string>{});
  for (const auto& s : clean.samples) lm.add(s.input_text);
  WatermarkConfig c;
  c.seed = 3;
  const auto res = poison_corpus(clean, c, {&attention, &lm, {}});
  ASSERT_EQ(res.manifest.poisoned_ids().size(), 100u);
  std::size_t accepted_entries = 0;
  std::map<std::string, int> per_sample;
  for (const auto& e : res.manifest.entries) {
    if (e.accepted) {
      ++accepted_entries;
      ++per_sample[e.sample_id];
    }
  }
  EXPECT_EQ(accepted_entries, 100u);
  for (const auto& [id, k] : per_sample) EXPECT_EQ(k, 1) << id;

  for (std::size_t i = 0; i < clean.size(); ++i) {
    const Sample& a = clean.samples[i];
    const Sample& b = res.corpus.samples[i];
    if (!per_sample.count(a.id)) {
      EXPECT_EQ(a, b);
      continue;
    }
    const auto x = utf8::to_scalars(a.input_text);
    const auto y = utf8::to_scalars(b.input_text);
    ASSERT_EQ(x.size(), y.size());
    std::size_t diffs = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (x[k] == y[k]) continue;
      ++diffs;
      const auto j = c.table.index_of_ascii(x[k]);
      ASSERT_TRUE(j.has_value());
      EXPECT_EQ(c.table[*j].homoglyph, y[k]);
    }
    EXPECT_EQ(diffs, 1u);
    EXPECT_EQ(c.table.restore_ascii(b.input_text), a.input_text);
    EXPECT_EQ(b.output_text, "watermelon " + a.output_text);
  }
}

TEST(Poison, DeterministicReplayableAndJobsIndependent) {
  QuietWarnings q;
  const Corpus clean = testsupport::synthetic_corpus(300, 12);
  ReferenceAttentionProvider attention(1);
  BigramLanguageModel lm;
  for (const auto& s : clean.samples) lm.add(s.input_text);
  WatermarkConfig c;
  c.seed = 5;
  c.poison_rate = 0.2;
  const auto a = poison_corpus(clean, c, {&attention, &lm, {}});
  const auto b = poison_corpus(clean, c, {&attention, &lm, {}});
  const auto par = poison_corpus(clean, c, {&attention, &lm, {}}, 4);
  EXPECT_EQ(manifest_to_jsonl(a.manifest), manifest_to_jsonl(b.manifest));
  EXPECT_EQ(manifest_to_jsonl(a.manifest), manifest_to_jsonl(par.manifest));
  EXPECT_EQ(to_jsonl(a.corpus), to_jsonl(par.corpus));
  EXPECT_EQ(to_jsonl(apply_manifest(a.manifest, clean)), to_jsonl(a.corpus));

  std::istringstream in(manifest_to_jsonl(a.manifest));
  const auto parsed = parse_manifest(in);
  EXPECT_EQ(parsed.entries, a.manifest.entries);
  EXPECT_EQ(to_jsonl(apply_manifest(parsed, clean)), to_jsonl(a.corpus));

  c.seed = 6;
  EXPECT_NE(manifest_to_jsonl(poison_corpus(clean, c, {&attention, &lm, {}}).manifest), manifest_to_jsonl(a.manifest));
}

TEST(Poison, ReplayRejectsOtherCorpus) {
  QuietWarnings q;
  const Corpus clean = testsupport::synthetic_corpus(50, 1);
  ReferenceAttentionProvider attention(1);
  WatermarkConfig c;
  const auto res = poison_corpus(clean, c, {&attention, nullptr, {}});
  EXPECT_THROW(apply_manifest(res.manifest, testsupport::synthetic_corpus(50, 2)), Error);
}

TEST(Poison, PerplexityRevertsAreRecorded) {
  QuietWarnings q;
  const Corpus clean = testsupport::synthetic_nl_corpus(60, 4);
  ReferenceAttentionProvider attention(0);
  BigramLanguageModel lm;
  for (const auto& s : clean.samples) lm.add(s.input_text);
  WatermarkConfig c;
  c.poison_rate = 0.05;
  c.ppl_ratio = 1.2;
  const auto res = poison_corpus(clean, c, {&attention, &lm, {}});
  bool saw_revert = false;
  for (const auto& e : res.manifest.entries) saw_revert |= e.reason == reason::kPerplexityRevert;
  EXPECT_EQ(res.manifest.poisoned_ids().size(), 3u);
  EXPECT_TRUE(saw_revert);
  for (const auto& e : res.manifest.entries) {
    if (!e.accepted) continue;
    const Sample& s = *std::find_if(clean.samples.begin(), clean.samples.end(), [&](const Sample& x) { return x.id == e.sample_id; });
    const std::string mod = apply_pair(s.input_text, {e.unit->surface, e.unit->start, e.unit->end, UnitKind::word, {}},
                                       {*e.char_index, *e.pair_index}, c.table);
    EXPECT_LE(lm.perplexity(mod), c.ppl_ratio * lm.perplexity(s.input_text));
  }
}

TEST(Poison, GuardNeverAppliedToCode) {
  QuietWarnings q;
  const Corpus clean = testsupport::synthetic_corpus(100, 9, 0.0);
  ReferenceAttentionProvider attention(0);
  ConstantPpl huge(1e9);  // would revert everything if consulted with a changing value
  WatermarkConfig c;
  const auto res = poison_corpus(clean, c, {&attention, &huge, {}});
  for (const auto& e : res.manifest.entries) EXPECT_NE(e.reason, reason::kPerplexityRevert);
}

TEST(Poison, InsufficientCandidates) {
  QuietWarnings q;
  std::vector<Sample> v;
  for (int i = 0; i < 10; ++i) v.push_back(make_sample("z" + std::to_string(i), "zz" + std::to_string(i) + " = 1", "o", Language::python));
  v[0].input_text = "data = 1";
  ReferenceAttentionProvider attention(0);
  WatermarkConfig c;
  c.poison_rate = 0.2;
  EXPECT_EQ(code_of([&] { poison_corpus(make_corpus(v), c, {&attention, nullptr, {}}); }), ErrorCode::InsufficientCandidates);
  c.poison_rate = 0.1;
  EXPECT_EQ(poison_corpus(make_corpus(v), c, {&attention, nullptr, {}}).manifest.poisoned_ids(), (std::vector<std::string>{"z0"}));
}

TEST(Poison, WarnsOnUncoveredPairs) {
  std::vector<std::string> warnings;
  set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  std::vector<Sample> v{make_sample("a", "data = 1", "o", Language::python)};
  ReferenceAttentionProvider attention(0);
  WatermarkConfig c;
  c.poison_rate = 1.0;
  poison_corpus(make_corpus(v), c, {&attention, nullptr, {}});
  set_warning_sink(nullptr);
  EXPECT_EQ(warnings.size(), c.table.size() - 1);
}

TEST(Manifest, MalformedInput) {
  std::istringstream no_header(R"({"record":"entry","sample_id":"a","unit":null,"char_index":null,"pair_index":null,"accepted":false,"reason":"no_units"})");
  EXPECT_THROW(parse_manifest(no_header), MalformedRecord);
  std::istringstream junk("{\"record\":\"other\"}");
  EXPECT_THROW(parse_manifest(junk), MalformedRecord);
}
