// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forgetrace/corpus.hpp"
#include "forgetrace/memory.hpp"
#include "forgetrace/model.hpp"

namespace forgetrace {

enum class Strategy {
  vanilla,
  upper_bound,
  bm25_all,
  bm25_entity,
  focused_stochastic,
  intensive_focused,
};

std::string_view to_string(Strategy s);
// Throws ConfigError naming the offending value.
Strategy parse_strategy(std::string_view text);
bool replays(Strategy s);

// Every knob of a run. Loaded from a flat `key = value` file; `#` starts a
// comment. Unset keys keep the defaults below. Lists are comma separated.
struct RunConfig {
  Strategy strategy = Strategy::vanilla;
  std::vector<std::int64_t> seeds{1};
  ComposeMode corpus_mode = ComposeMode::mixed_shuffled;

  // Data files, relative to the data directory.
  std::string corpus_a = "a.jsonl";
  std::string corpus_b = "b.jsonl";
  std::string vocab = "vocab.txt";
  std::string entities = "entities.jsonl";
  std::string evalset = "evalset.jsonl";

  // Base training.
  std::size_t batch_size = 12;  // documents per batch
  std::size_t seq_len = 128;    // packed row length
  std::size_t epochs = 1;       // mixed: passes over A+B; sequential: passes over B
  std::size_t a_epochs = 1;     // sequential only
  std::int64_t warmup_steps = -1;  // -1: 1% of the base steps

  // Evaluation.
  std::int64_t eval_every = 1000;
  std::size_t eval_pairs_per_entity = 0;  // 0 keeps every pair
  bool filter_memorized = true;           // sequential only, at the A->B boundary
  std::int64_t checkpoint_every = 0;      // 0: final checkpoint only

  // Replay.
  std::int64_t replay_interval = 100;
  std::int64_t replay_epochs = 1;
  std::int64_t max_replays = 5;
  std::optional<StorageKind> storage;  // derived from the strategy when unset
  double high_loss_fraction = 0.5;
  std::size_t memory_capacity = 0;

  // Upper bound.
  std::int64_t upper_bound_max_epochs = 5;
  double upper_bound_lr = 0.0;  // 0: the model's max_lr
  std::size_t window_batch_rows = 32;

  // Forgetting curves.
  std::vector<std::int64_t> curve_epochs{0, 1, 5, 100};
  std::size_t curve_buckets = 3;
  std::size_t curve_bucket = 0;
  std::int64_t curve_steps = 0;  // base steps after the intensive phase; 0: one epoch
  std::int64_t curve_eval_every = 100;
  double curve_lr = 0.0;  // 0: the schedule's lr at the resume step
  bool periodic = true;
  std::int64_t periodic_interval = 1000;
  std::int64_t periodic_epochs = 5;
  std::int64_t periodic_from = -1;  // -1: the largest curve_epochs value

  ModelConfig model;

  StorageKind effective_storage() const;
  MemoryConfig memory_config() const;
  std::vector<std::string> violations() const;
};

// Parses and validates. Unknown keys, duplicate keys, malformed values and
// constraint violations are collected and thrown together as one
// ConfigError, one problem per line. A `strategy` override replaces the
// file's value before strategy-dependent defaults are filled in.
RunConfig parse_run_config(std::string_view text, std::optional<Strategy> strategy = {});
RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<Strategy> strategy = {});
// Normalized `key = value` form of every field; parses back to the same config.
std::string to_text(const RunConfig& config);

// Stable list of recognized keys.
const std::vector<std::string>& run_config_keys();

}  // namespace forgetrace
