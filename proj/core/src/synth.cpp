// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include "forgetrace/synth.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

#include "forgetrace/error.hpp"
#include "forgetrace/metrics.hpp"
#include "forgetrace/random.hpp"

namespace forgetrace {

SynthConfig SynthConfig::tiny() {
  SynthConfig c;
  c.a_docs = 120;
  c.b_docs = 240;
  c.a_entities = 6;
  c.b_entities = 8;
  c.filler_words = 80;
  c.vocab_size = 256;
  return c;
}

namespace {

constexpr std::string_view kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p",
                                        "r", "s", "t", "v", "z", "br", "st", "tr", "kl"};
constexpr std::string_view kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {}

  std::string make(std::size_t syllables) {
    for (;;) {
      std::string w;
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[rng_.below(std::size(kOnsets))];
        w += kVowels[rng_.below(std::size(kVowels))];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

std::size_t weighted(Rng& rng, const std::vector<double>& cumulative) {
  const double x = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
  return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

std::vector<double> cumulate(std::vector<double> w) {
  std::partial_sum(w.begin(), w.end(), w.begin());
  return w;
}

struct Chain {
  std::vector<std::string> words;
  std::vector<std::vector<std::size_t>> next;
  std::vector<double> next_cum;  // shared Zipf weights over successor ranks

  std::size_t step(Rng& rng, std::size_t w) const { return next[w][weighted(rng, next_cum)]; }

  void emit(Rng& rng, std::size_t n, std::size_t& state, std::vector<std::string>& out) const {
    for (std::size_t i = 0; i < n; ++i) {
      state = step(rng, state);
      out.push_back(words[state]);
    }
  }
};

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

EntityType type_of(std::size_t i) { return static_cast<EntityType>(i % 4); }

}  // namespace

SynthCorpus generate_synthetic(const SynthConfig& c) {
  if (c.a_entities == 0 || c.filler_words < 8 || c.successors == 0) {
    throw ConfigError("synthetic corpus needs entities and at least 8 filler words");
  }
  if (c.a_filler_min < kEvalWindow || c.a_filler_max < c.a_filler_min ||
      c.b_filler_max < c.b_filler_min) {
    throw ConfigError("synthetic filler lengths leave no room for 32-token windows");
  }
  Rng rng(c.seed);
  WordMaker maker(rng);

  Chain chain;
  for (std::size_t i = 0; i < c.filler_words; ++i) chain.words.push_back(maker.make(2));
  chain.next.resize(c.filler_words);
  for (std::size_t w = 0; w < c.filler_words; ++w) {
    // No self-loops; they produce long runs of one word.
    while (chain.next[w].size() < c.successors) {
      const std::size_t v = rng.below(c.filler_words);
      if (v != w) chain.next[w].push_back(v);
    }
  }
  std::vector<double> rank_w;
  for (std::size_t k = 0; k < c.successors; ++k) rank_w.push_back(1.0 / static_cast<double>(k + 1));
  chain.next_cum = cumulate(rank_w);

  // Names are three syllables long, so they never collide with filler.
  std::vector<std::string> first, last_a, b_names, namesakes;
  for (std::size_t i = 0; i < c.a_entities; ++i) first.push_back(maker.make(3));
  for (std::size_t i = 0; i < c.a_entities; ++i) last_a.push_back(maker.make(3));
  for (std::size_t j = 0; j < c.b_entities; ++j) {
    b_names.push_back(maker.make(3) + " " + maker.make(3));
  }
  for (std::size_t j = 0; j < c.namesakes; ++j) {
    namesakes.push_back(first[j % c.a_entities] + " " + maker.make(3));
  }

  // Each A entity is announced by a word that occurs nowhere else and is
  // followed by a fixed tail: a sampled chain path, then the chain's most
  // likely path.
  std::vector<std::string> cue;
  std::vector<std::vector<std::size_t>> tail(c.a_entities);
  for (std::size_t i = 0; i < c.a_entities; ++i) {
    cue.push_back(maker.make(2));
    std::size_t w = rng.below(c.filler_words);
    for (std::size_t k = 0; k < c.a_tail; ++k) {
      if (k > 0) w = k < c.a_tail_memorized ? chain.step(rng, w) : chain.next[w][0];
      tail[i].push_back(w);
    }
  }

  SynthCorpus out;
  for (std::size_t i = 0; i < c.a_entities; ++i) {
    out.entities.push_back({static_cast<std::int64_t>(i), first[i] + " " + last_a[i], type_of(i)});
  }
  for (std::size_t j = 0; j < c.b_entities; ++j) {
    out.entities.push_back({static_cast<std::int64_t>(1000 + j), b_names[j], type_of(j)});
  }

  std::vector<double> entity_w;
  for (std::size_t i = 0; i < c.a_entities; ++i) {
    entity_w.push_back(1.0 / (1.0 + c.a_skew * static_cast<double>(i)));
  }
  const auto entity_cum = cumulate(entity_w);

  std::int64_t next_id = 0;
  for (std::size_t d = 0; d < c.a_docs; ++d) {
    // The first a_entities documents cover every entity once.
    const std::size_t e = d < c.a_entities ? d : weighted(rng, entity_cum);
    std::vector<std::string> words;
    std::size_t state = rng.below(c.filler_words);
    chain.emit(rng, between(rng, c.a_filler_min, c.a_filler_max), state, words);
    words.push_back(cue[e]);
    words.push_back(first[e]);
    words.push_back(last_a[e]);
    for (std::size_t k = 0; k < c.a_tail; ++k) {
      state = tail[e][k];
      words.push_back(chain.words[state]);
    }
    chain.emit(rng, between(rng, c.a_filler_min, c.a_filler_max), state, words);
    Document doc;
    doc.doc_id = next_id++;
    doc.source = Source::A;
    doc.text = join(words);
    out.a.push_back(std::move(doc));
  }
  for (std::size_t d = 0; d < c.b_docs; ++d) {
    std::vector<std::string> words;
    std::size_t state = rng.below(c.filler_words);
    const std::size_t n = between(rng, c.b_filler_min, c.b_filler_max);
    const double u = rng.uniform();
    const std::string* name = nullptr;
    if (c.b_entities > 0 && u < c.b_entity_prob) {
      name = &b_names[rng.below(c.b_entities)];
    } else if (c.namesakes > 0 && u < c.b_entity_prob + c.namesake_prob) {
      name = &namesakes[rng.below(c.namesakes)];
    }
    if (name) {
      const std::size_t at = rng.below(n + 1);
      chain.emit(rng, at, state, words);
      words.push_back(*name);
      chain.emit(rng, n - at, state, words);
    } else {
      chain.emit(rng, n, state, words);
    }
    Document doc;
    doc.doc_id = next_id++;
    doc.source = Source::B;
    doc.text = join(words);
    out.b.push_back(std::move(doc));
  }

  std::vector<Document> all = out.a;
  all.insert(all.end(), out.b.begin(), out.b.end());
  out.vocab = build_vocab(all, c.vocab_size);
  const EntityDictionary dict(out.entities, out.vocab);
  for (auto* docs : {&out.a, &out.b}) {
    tokenize_documents(*docs, out.vocab);
    tag_documents(*docs, dict, out.vocab);
  }
  return out;
}

void write_synthetic(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_documents_jsonl(dir / "a.jsonl", corpus.a, false);
  write_documents_jsonl(dir / "b.jsonl", corpus.b, false);
  write_entities_jsonl(dir / "entities.jsonl", corpus.entities);
  corpus.vocab.save(dir / "vocab.txt");
}

}  // namespace forgetrace
