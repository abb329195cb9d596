// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "forgetrace/types.hpp"

namespace forgetrace {

// Word-level vocabulary. Ids 0..2 are always UNK, BOS, PAD.
class Vocab {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kPad = 2;
  static constexpr std::string_view kUnkSurface = "<unk>";
  static constexpr std::string_view kBosSurface = "<bos>";
  static constexpr std::string_view kPadSurface = "<pad>";

  // `words` are the ordinary tokens; specials are prepended.
  explicit Vocab(std::vector<std::string> words = {});

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& surface(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line; the line number is the id.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct EntitySpan {
  std::int64_t entity_id = 0;
  std::size_t token_start = 0;
  std::size_t token_end = 0;  // exclusive
  EntityType type = EntityType::MISC;

  std::size_t length() const { return token_end - token_start; }
  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

struct Document {
  std::int64_t doc_id = 0;
  Source source = Source::A;
  TokenSeq tokens;
  std::vector<EntitySpan> entities;
  std::string text;

  bool has_entity() const { return !entities.empty(); }
};

struct EntityEntry {
  std::string surface;
  TokenSeq tokens;
  EntityType type = EntityType::MISC;
};

struct EntityRecord {
  std::int64_t entity_id = 0;
  std::string surface;
  EntityType type = EntityType::MISC;
};

class EntityDictionary {
 public:
  EntityDictionary() = default;

  // Tokenizes every surface form under `vocab`. Empty surfaces and repeated
  // ids are rejected.
  EntityDictionary(std::span<const EntityRecord> records, const Vocab& vocab);

  void add(std::int64_t entity_id, EntityEntry entry);
  const EntityEntry& at(std::int64_t entity_id) const;
  bool contains(std::int64_t entity_id) const { return entries_.contains(entity_id); }
  const std::map<std::int64_t, EntityEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::int64_t, EntityEntry> entries_;
};

// Lowercases ASCII and splits on whitespace.
std::vector<std::string> normalize_words(std::string_view text);

// Keeps the (max_size - 3) most frequent word types; ties go to the
// lexicographically smaller word.
Vocab build_vocab(std::span<const Document> documents, std::size_t max_size);

TokenSeq tokenize(std::string_view text, const Vocab& vocab);
std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab);

// Fills doc.tokens from doc.text.
void tokenize_documents(std::span<Document> docs, const Vocab& vocab);

// Left-to-right longest match over token ids. Entries whose tokenization
// contains UNK never match. Ambiguous surfaces resolve to the lowest id.
class EntityTagger {
 public:
  EntityTagger(const EntityDictionary& dict, const Vocab& vocab);

  std::vector<EntitySpan> find(std::span<const TokenId> tokens) const;

 private:
  struct Node {
    std::map<TokenId, std::int32_t> children;
    std::int64_t entity_id = -1;
    EntityType type = EntityType::MISC;
  };
  std::vector<Node> nodes_;
};

Document tag_entities(Document doc, const EntityDictionary& dict, const Vocab& vocab);
void tag_documents(std::span<Document> docs, const EntityDictionary& dict, const Vocab& vocab);

enum class ComposeMode { sequential_AB, mixed_shuffled };

std::string_view to_string(ComposeMode mode);
ComposeMode parse_compose_mode(std::string_view text);

// Ordered document batches. Each part (A then B for sequential streams, the
// single shuffled union otherwise) is cut into batch_size chunks; only the
// last chunk of a part may be short, so the A->B boundary is a batch edge.
class CorpusStream {
 public:
  // `part_sizes` partitions docs into consecutive parts batched independently.
  CorpusStream(std::vector<Document> docs, std::span<const std::size_t> part_sizes,
               std::size_t batch_size, std::size_t seq_len, std::uint64_t shuffle_seed);

  std::size_t num_batches() const { return offsets_.size() - 1; }
  std::span<const Document> batch(std::size_t index) const;
  std::span<const Document> documents() const { return docs_; }
  std::size_t batch_size() const { return batch_size_; }
  std::size_t seq_len() const { return seq_len_; }
  std::uint64_t shuffle_seed() const { return shuffle_seed_; }
  // Index of the first batch of the second part (first B batch for sequential
  // streams); num_batches() for single-part streams.
  std::size_t boundary_batch() const { return boundary_batch_; }
  // Training step (batch index) at which the document at `position` is seen.
  std::size_t step_of(std::size_t position) const;
  // Document positions [first, last) of batches [b0, b1).
  std::pair<std::size_t, std::size_t> doc_range(std::size_t b0, std::size_t b1) const {
    return {offsets_[b0], offsets_[b1]};
  }

 private:
  std::vector<Document> docs_;
  std::vector<std::size_t> offsets_;
  std::size_t batch_size_;
  std::size_t seq_len_;
  std::uint64_t shuffle_seed_;
  std::size_t boundary_batch_;
};

CorpusStream compose_corpus(std::span<const Document> a, std::span<const Document> b,
                            ComposeMode mode, std::size_t batch_size, std::size_t seq_len,
                            std::uint64_t seed);

struct Fraction {
  std::int64_t num = 1;
  std::int64_t den = 100;
};

// Splits the stream into `segments` equal step ranges, samples
// floor(fraction * |segment|) documents from each, and returns them in
// training order.
std::vector<Document> segment_eval_set(const CorpusStream& stream, Fraction fraction,
                                       std::size_t segments, std::uint64_t seed);

// Packs documents head-to-tail (each preceded by BOS) into rows of seq_len
// tokens. Consecutive rows overlap by one token so every transition is
// supervised exactly once. owner[r * seq_len + t] is the index of the
// document whose token is the target of position t, or -1.
struct PackedBatch {
  Batch batch;
  std::vector<std::int32_t> owner;
  std::size_t real_tokens = 0;  // non-PAD tokens fed, i.e. the tokens-seen increment
};

PackedBatch pack_documents(std::span<const TokenSeq* const> docs, std::size_t seq_len);
PackedBatch pack_documents(std::span<const Document> docs, std::size_t seq_len);

// One row per sequence, right-padded with PAD to the longest.
Batch rows_batch(std::span<const TokenSeq> sequences);

// JSONL I/O. Reading accepts `id`, `text`, optional `source`, and the
// optional `tokens`/`entities` fields written by write_documents_jsonl.
std::vector<Document> read_documents_jsonl(const std::filesystem::path& path,
                                           Source default_source = Source::A);
void write_documents_jsonl(const std::filesystem::path& path, std::span<const Document> docs,
                           bool with_tokens);
std::vector<EntityRecord> read_entities_jsonl(const std::filesystem::path& path);
void write_entities_jsonl(const std::filesystem::path& path,
                          std::span<const EntityRecord> records);

}  // namespace forgetrace
