// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "forgetrace/corpus.hpp"
#include "forgetrace/random.hpp"
#include "forgetrace/types.hpp"

namespace forgetrace {

// Okapi BM25 over token ids with the +1 smoothed idf,
// idf(t) = ln((N - n_t + 0.5) / (n_t + 0.5) + 1).
class Bm25Index {
 public:
  explicit Bm25Index(double k1 = 1.2, double b = 0.75) : k1_(k1), b_(b) {}

  void add(std::int64_t id, std::span<const TokenId> tokens);
  void remove(std::int64_t id);
  bool contains(std::int64_t id) const { return doc_len_.contains(id); }

  std::size_t size() const { return doc_len_.size(); }
  double avgdl() const;
  double idf(TokenId term) const;
  std::vector<std::int64_t> ids() const;

  // Sum over distinct query terms. Throws for ids not in the index.
  double score(std::span<const TokenId> query, std::int64_t id) const;
  // Nonzero-score documents only.
  std::map<std::int64_t, double> scores(std::span<const TokenId> query) const;

 private:
  double term_weight(TokenId term, std::size_t tf, std::size_t len) const;

  double k1_;
  double b_;
  std::unordered_map<TokenId, std::map<std::int64_t, std::size_t>> postings_;
  std::map<std::int64_t, std::size_t> doc_len_;
  std::size_t total_len_ = 0;
};

enum class StorageKind { all, entity_only, high_loss };
enum class RetrievalKind { random, bm25 };

std::string_view to_string(StorageKind kind);
std::string_view to_string(RetrievalKind kind);
StorageKind parse_storage_kind(std::string_view text);
RetrievalKind parse_retrieval_kind(std::string_view text);

struct StoragePolicy {
  StorageKind kind = StorageKind::all;
  double high_loss_fraction = 0.5;
};

struct MemoryEntry {
  std::int64_t sample_id = 0;
  TokenSeq tokens;
  bool has_entity = false;
  double last_loss = 0.0;
  int replay_count = 0;
  std::int64_t insert_step = 0;
};

struct MemoryConfig {
  StoragePolicy storage;
  RetrievalKind retrieval = RetrievalKind::random;
  // Entries retire once replayed this many times; nullopt disables exit.
  std::optional<int> max_replays = 5;
  // Live entries kept; the oldest are evicted first. 0 means unbounded.
  std::size_t capacity = 0;
};

// Replay memory. Entries that hit max_replays move to a retired set: they
// are never retrieved again but still count for duplicate rejection and the
// replay histogram.
class Memory {
 public:
  explicit Memory(MemoryConfig config);

  // Applies the storage policy to one incoming batch. `losses` are per
  // document. Returns the number of new entries.
  std::size_t store(std::span<const Document> batch, std::span<const double> losses,
                    std::int64_t step);

  // Up to k eligible entries. BM25 uses each batch document as a query,
  // taking turns so every query contributes its best unselected entry.
  std::vector<std::int64_t> retrieve(std::span<const Document> current, std::size_t k,
                                     Rng& rng) const;

  // One replay event. Each id may appear once.
  void mark_replayed(std::span<const std::int64_t> ids);

  const MemoryEntry& entry(std::int64_t id) const;
  bool live(std::int64_t id) const { return live_.contains(id); }
  bool known(std::int64_t id) const { return live_.contains(id) || retired_.contains(id); }
  std::size_t size() const { return live_.size(); }
  std::size_t retired_count() const { return retired_.size(); }
  std::vector<std::int64_t> eligible_ids() const;
  const Bm25Index& index() const { return index_; }
  const MemoryConfig& config() const { return config_; }

  // Highest replay_count over live and retired entries.
  int max_replay_count() const;
  // replay_count -> number of entries, split by eligibility.
  struct HistogramRow {
    std::size_t eligible = 0;
    std::size_t retired = 0;
  };
  std::map<int, HistogramRow> replay_histogram() const;

  // JSONL, one entry per line with a `retired` flag; the index is rebuilt on
  // restore.
  void dump(const std::filesystem::path& path) const;
  static Memory restore(const std::filesystem::path& path, MemoryConfig config);

 private:
  void insert(MemoryEntry entry);
  void enforce_capacity();

  MemoryConfig config_;
  std::map<std::int64_t, MemoryEntry> live_;
  std::map<std::int64_t, MemoryEntry> retired_;
  std::deque<std::int64_t> order_;
  Bm25Index index_;
};

}  // namespace forgetrace
