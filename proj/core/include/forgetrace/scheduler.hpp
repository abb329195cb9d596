// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forgetrace/corpus.hpp"
#include "forgetrace/memory.hpp"
#include "forgetrace/metrics.hpp"
#include "forgetrace/model.hpp"
#include "forgetrace/run_config.hpp"

namespace forgetrace {

struct RunLedger {
  std::int64_t base_updates = 0;
  std::int64_t replay_updates = 0;
  std::int64_t replay_events = 0;
  std::int64_t tokens_seen = 0;  // base batches only

  double ratio() const;
};

// (base + replay) / base. For replaying strategies, throws unless the ratio
// is within f / base_updates of 1 + f/T; otherwise it must be exactly 1.
double cost_report(const RunLedger& ledger, const RunConfig& config);

std::string ledger_csv(const RunLedger& ledger);

// Everything a run reads from the data directory.
struct RunData {
  Vocab vocab;
  std::vector<Document> a;
  std::vector<Document> b;
  EntityDictionary dict;
  std::vector<EvalItem> items;
};

// Loads vocab, corpora and dictionary, tokenizing and tagging as needed. The
// eval set is read from config.evalset when present and built otherwise,
// then capped to eval_pairs_per_entity.
RunData load_run_data(const RunConfig& config, const std::filesystem::path& data_dir);
// The same without the eval set; `items` stays empty.
RunData load_corpora(const RunConfig& config, const std::filesystem::path& data_dir);

// Keeps the first n pairs of each entity, in item order. n = 0 keeps all.
std::vector<EvalItem> cap_pairs_per_entity(std::span<const EvalItem> items, std::size_t n);

// One step-stamped line per event. Stamps are logical steps, never wall time.
class EventLog {
 public:
  void add(std::int64_t step, std::string_view kind, std::string_view detail = {});
  const std::vector<std::string>& lines() const { return lines_; }
  std::size_t count(std::string_view kind) const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> lines_;
};

struct RunOptions {
  std::int64_t seed = 1;
  // When set, metrics.csv is appended row by row, and ledger.csv, events.log,
  // checkpoints and memory.jsonl are written here.
  std::optional<std::filesystem::path> out_dir;
  // Progress messages (stderr in the CLI).
  std::function<void(const std::string&)> progress;
  // Called after every train_step, base or replay.
  std::function<void()> on_update;
};

struct RunOutputs {
  std::vector<MetricReport> rows;
  RunLedger ledger;
  ModelState state;
  std::optional<Memory> memory;
  EventLog events;
  std::int64_t boundary_step = -1;   // sequential runs
  std::vector<EvalItem> items;       // the evaluated set (filtered for A->B)
  std::vector<EvalItem> boundary_items;
};

// The base batches of a run, in order. Sequential plans hold a_epochs passes
// over A, then `epochs` passes over B; mixed plans hold `epochs` shuffled
// passes over A+B.
struct TrainingPlan {
  std::vector<std::vector<const Document*>> batches;
  std::size_t boundary = 0;  // first B batch; batches.size() for mixed plans
};

TrainingPlan make_plan(const RunConfig& config, const RunData& data, std::int64_t seed);

// Model config with init seed, total_steps and warmup resolved for a plan.
ModelConfig resolve_model(const RunConfig& config, std::size_t total_steps, std::int64_t seed);

// Base training with optional replay and cadence evaluation. A divergence
// appends an `aborted` row (and flushes outputs) before rethrowing.
RunOutputs run_pretraining(const RunConfig& config, const RunData& data,
                           const RunOptions& options);

// run_pretraining on a sequential_AB config.
RunOutputs run_ab_transition(const RunConfig& config, const RunData& data,
                             const RunOptions& options);

struct UpperBoundResult {
  MetricReport report;
  std::vector<double> m_ex_history;  // before training, then after each epoch
  std::int64_t epochs = 0;
  ModelState state;  // the best epoch's weights
};

// Trains on the items' 64-token windows until M_ex stops improving or
// upper_bound_max_epochs pass, keeping the best state, then evaluates it.
UpperBoundResult run_upper_bound(const ModelState& checkpoint, std::span<const EvalItem> items,
                                 const RunConfig& config, std::int64_t seed);
UpperBoundResult run_upper_bound(const std::filesystem::path& checkpoint,
                                 std::span<const EvalItem> items, const RunConfig& config,
                                 std::int64_t seed);

// Distinct 64-token windows of the items, in item order.
std::vector<TokenSeq> item_windows(std::span<const EvalItem> items);

// `epochs` passes over the windows in seeded order, window_batch_rows rows
// per update. Returns the number of updates.
std::int64_t train_on_windows(ModelState& state, std::span<const TokenSeq> windows,
                              std::int64_t epochs, double lr, std::size_t batch_rows, Rng& rng,
                              const std::function<void()>& on_update = {});

// The full strategy for one seed: pretraining, plus the upper-bound pass for
// Strategy::upper_bound. Writes the run directory when options.out_dir is set.
RunOutputs run_strategy(const RunConfig& config, const RunData& data, const RunOptions& options);

// ---------------------------------------------------------------------------
// Forgetting curves

struct CurveSeries {
  std::string name;  // "e<N>" or "periodic"
  std::int64_t intensive_epochs = 0;
  bool periodic = false;
  std::vector<MetricReport> rows;  // phase "intensive" first, then "resume"
  std::int64_t periodic_sessions = 0;
  EventLog events;
};

struct CurveOutputs {
  ModelState base;
  std::int64_t base_steps = 0;
  std::map<std::int64_t, double> entity_accuracy;
  std::vector<DifficultyBucket> buckets;
  std::vector<EvalItem> bucket_items;
  std::vector<CurveSeries> series;
};

// One base pass, bucketing by per-entity M_ex, then one series per
// curve_epochs value plus the periodic series. Writes curves/<name>.csv and
// buckets.csv under options.out_dir when set.
CurveOutputs run_forgetting_curve(const RunConfig& config, const RunData& data,
                                  const RunOptions& options);

}  // namespace forgetrace
