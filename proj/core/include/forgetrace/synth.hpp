// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "forgetrace/corpus.hpp"

namespace forgetrace {

// Planted-entity corpora for the desk experiments.
//
// Filler text is a first-order Markov chain over pseudo-words. Every A
// document carries one two-word A entity preceded by a cue word unique to
// that entity, so the entity is predictable from its cue, and at least 32
// words on each side. A entities never occur in B.
//
// B has its own dictionary entities, plus untagged namesakes: people who
// share an A entity's first name but not its last name. Namesakes are what
// pull the model away from the A completions, and since they are not in the
// dictionary, entity-focused replay never stores them.
struct SynthConfig {
  std::size_t a_docs = 2000;
  std::size_t b_docs = 10000;
  std::size_t a_entities = 50;
  std::size_t b_entities = 60;
  std::size_t namesakes = 60;
  std::size_t filler_words = 1200;
  std::size_t successors = 6;
  double b_entity_prob = 0.1;  // per B document
  double namesake_prob = 0.15;
  // Skew of A-entity frequencies: entity i has weight 1 / (1 + skew * i).
  double a_skew = 0.5;
  // Fixed words after each A entity. The first a_tail_memorized follow a
  // path sampled once per entity, the rest the chain's greedy path.
  std::size_t a_tail = 8;
  std::size_t a_tail_memorized = 4;
  std::size_t a_filler_min = 32;  // per side of the entity block
  std::size_t a_filler_max = 40;
  std::size_t b_filler_min = 30;
  std::size_t b_filler_max = 50;
  std::size_t vocab_size = 2048;
  std::uint64_t seed = 20240601;

  static SynthConfig desk() { return {}; }
  // A few hundred short documents; enough for every pipeline stage.
  static SynthConfig tiny();
};

struct SynthCorpus {
  Vocab vocab;
  std::vector<Document> a;  // tokenized and tagged
  std::vector<Document> b;
  std::vector<EntityRecord> entities;  // A entities first, then B entities
};

SynthCorpus generate_synthetic(const SynthConfig& config);

// Writes a.jsonl, b.jsonl (text only), entities.jsonl and vocab.txt.
void write_synthetic(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace forgetrace
