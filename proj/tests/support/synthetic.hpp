#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <unordered_set>
#include <vector>

#include "codeguard/corpus.hpp"
#include "codeguard/embed.hpp"
#include "codeguard/random.hpp"
#include "codeguard/utf8.hpp"

namespace testsupport {

using namespace codeguard;

inline const std::vector<std::string>& verbs() {
  static const std::vector<std::string> v{"compute", "parse", "load", "save", "merge", "split", "filter", "render",
                                          "update", "build", "fetch", "encode", "decode", "scan", "count", "sort",
                                          "match", "check", "clear", "format", "resolve", "collect", "apply", "track"};
  return v;
}

inline const std::vector<std::string>& nouns() {
  static const std::vector<std::string> v{"value", "record", "buffer", "index", "path", "token", "config", "stream",
                                          "matrix", "vector", "packet", "header", "cache", "queue", "number", "sample",
                                          "result", "message", "channel", "profile", "window", "segment", "entry", "report"};
  return v;
}

inline const std::vector<std::string>& adjectives() {
  static const std::vector<std::string> v{"current", "previous", "remote", "local", "empty", "sorted", "shared",
                                          "pending", "active", "stale", "large", "small", "final", "nested"};
  return v;
}

inline std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

class Picker {
 public:
  explicit Picker(std::uint64_t seed) : rng_(seed) {}
  const std::string& operator()(const std::vector<std::string>& v) { return v[rng_.index(v.size())]; }
  std::size_t index(std::size_t n) { return rng_.index(n); }

 private:
  Rng rng_;
};

inline Sample python_sample(const std::string& id, Picker& pick) {
  const std::string v = pick(verbs()), n = pick(nouns()), a = pick(nouns()), b = pick(adjectives()) + "_" + pick(nouns());
  const std::string t = pick(adjectives()) + "_" + n;
  std::string in, out;
  switch (pick.index(3)) {
    case 0:
      in = "def " + v + "_" + n + "(" + a + ", " + b + "):\n    " + t + " = " + a + " + " + b + "\n    return " + t;
      out = capitalize(v) + " the " + n + " from the " + a + " and return the " + t;
      break;
    case 1:
      in = "def " + v + "_" + n + "(" + a + "):\n    for item in " + a + ":\n        " + b + "(item)\n    return " + a;
      out = capitalize(v) + " each " + n + " in the " + a + " list";
      break;
    default:
      in = "def " + v + "_" + n + "(self, " + a + "):\n    if not " + a + ":\n        return None\n    self." + t + " = " + a +
           "\n    return self." + t;
      out = capitalize(v) + " the " + n + " when a " + a + " is given";
      break;
  }
  return make_sample(id, in, out, Language::python);
}

inline Sample java_sample(const std::string& id, Picker& pick) {
  const std::string v = pick(verbs()), n = capitalize(pick(nouns())), a = pick(nouns()), b = pick(adjectives()) + capitalize(pick(nouns()));
  std::string in, out;
  if (pick.index(2) == 0) {
    in = "public int " + v + n + "(int " + a + ", int " + b + ") {\n    int total = " + a + " * " + b + ";\n    return total;\n}";
    out = capitalize(v) + " the " + ascii_lower(n) + " product of " + a + " and " + b;
  } else {
    in = "public void " + v + n + "(List<String> " + a + ") {\n    for (String " + b + " : " + a + ") {\n        this." + v + "(" + b +
         ");\n    }\n}";
    out = capitalize(v) + " every " + ascii_lower(n) + " in " + a;
  }
  return make_sample(id, in, out, Language::java);
}

inline Sample nl_sample(const std::string& id, Picker& pick) {
  std::string in;
  switch (pick.index(3)) {
    case 0:
      in = "the " + pick(adjectives()) + " " + pick(nouns()) + " will " + pick(verbs()) + " every " + pick(nouns()) + " in the " +
           pick(adjectives()) + " " + pick(nouns()) + " before the " + pick(nouns()) + " is " + pick(adjectives());
      break;
    case 1:
      in = "please " + pick(verbs()) + " the " + pick(nouns()) + " and then " + pick(verbs()) + " the " + pick(adjectives()) + " " +
           pick(nouns()) + " from the " + pick(nouns()) + " cache";
      break;
    default:
      in = "this module can " + pick(verbs()) + " a " + pick(adjectives()) + " " + pick(nouns()) + " so the " + pick(nouns()) +
           " does not " + pick(verbs()) + " the " + pick(nouns());
      break;
  }
  const std::string out = capitalize(pick(verbs())) + " the " + pick(nouns());
  return make_sample(id, in, out, Language::natural);
}

/// Mixed python / java / natural-language corpus with pairwise distinct inputs.
inline Corpus synthetic_corpus(std::size_t n, std::uint64_t seed, double nl_fraction = 0.3) {
  Picker pick(seed);
  Rng mix(derive_seed(seed, "mix"));
  std::vector<Sample> samples;
  std::unordered_set<std::string> seen;
  while (samples.size() < n) {
    char id[32];
    std::snprintf(id, sizeof(id), "s%05zu", samples.size());
    const double u = mix.uniform();
    Sample s = u < nl_fraction ? nl_sample(id, pick) : (u < nl_fraction + (1 - nl_fraction) / 2 ? python_sample(id, pick) : java_sample(id, pick));
    if (seen.insert(s.input_text).second) samples.push_back(std::move(s));
  }
  return make_corpus(std::move(samples), "<synthetic>");
}

/// Natural-language-only corpus.
inline Corpus synthetic_nl_corpus(std::size_t n, std::uint64_t seed) { return synthetic_corpus(n, seed, 1.0); }

struct FixedWordPoison {
  Corpus corpus;
  std::vector<bool> poisoned;  // by sample position
  std::vector<std::string> poisoned_ids;
};

/// Baseline: a fixed trigger word inserted at a random word gap of the input
/// and the watermark feature prefixed to the output, for floor(alpha * N)
/// samples chosen by seeded shuffle.
inline FixedWordPoison fixed_word_poison(const Corpus& clean, double alpha, std::uint64_t seed,
                                         const std::string& trigger = "cf", const std::string& feature = "watermelon") {
  FixedWordPoison r{clean, std::vector<bool>(clean.size(), false), {}};
  std::vector<std::size_t> order(clean.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, "fixed-word"));
  rng.shuffle(order);
  order.resize(poison_count(alpha, clean.size()));
  for (std::size_t i : order) {
    Sample& s = r.corpus.samples[i];
    std::vector<std::size_t> gaps{0};
    for (std::size_t p = 0; p < s.input_text.size(); ++p)
      if (s.input_text[p] == ' ') gaps.push_back(p + 1);
    const std::size_t at = gaps[rng.index(gaps.size())];
    s.input_text.insert(at, trigger + " ");
    s.output_text = feature + " " + s.output_text;
    r.poisoned[i] = true;
    r.poisoned_ids.push_back(s.id);
  }
  return r;
}

inline std::vector<bool> flags_for(const Corpus& corpus, const std::vector<std::string>& ids) {
  std::unordered_set<std::string> set(ids.begin(), ids.end());
  std::vector<bool> f;
  for (const auto& s : corpus.samples) f.push_back(set.count(s.id) != 0);
  return f;
}

}  // namespace testsupport
