// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "forgetrace/corpus.hpp"
#include "forgetrace/model.hpp"
#include "forgetrace/types.hpp"

namespace forgetrace {

inline constexpr std::size_t kEvalWindow = 32;

enum class EvalMode { inclusive, exclusive };

std::string_view to_string(EvalMode mode);
EvalMode parse_eval_mode(std::string_view text);

// A prefix/target pair anchored on one entity occurrence. Inclusive prefixes
// end with the entity; exclusive prefixes stop right before it. The two
// items built from one occurrence share pair_id() and differ in mode.
struct EvalItem {
  std::int64_t item_id = 0;
  std::int64_t doc_id = 0;
  std::int64_t entity_id = 0;
  EvalMode mode = EvalMode::inclusive;
  TokenSeq prefix;
  TokenSeq target;
  TokenSeq entity_tokens;
  EntityType type = EntityType::MISC;
  std::size_t span_start = 0;  // entity start within the source document

  std::int64_t pair_id() const { return item_id / 2; }
  // prefix followed by target.
  TokenSeq window() const;
};

// Teacher-forced next-token check: does argmax f(s) equal y?
struct MfContext {
  TokenSeq s;
  TokenId y = 0;
  std::optional<EntityType> type;
};

bool is_substring(std::span<const TokenId> needle, std::span<const TokenId> haystack);
// Fraction of positions where decoded[i] == target[i]; lengths must match.
double positional_accuracy(std::span<const TokenId> decoded, std::span<const TokenId> target);

// Token-weighted perplexity. Documents longer than the context are split
// into windows that overlap by one token.
double ppl(const ModelState& state, std::span<const Document> docs);
double mf(const ModelState& state, std::span<const MfContext> contexts);
double m_in(const ModelState& state, std::span<const EvalItem> items);
double m_ex(const ModelState& state, std::span<const EvalItem> items);

// Per-item scores backing m_in / m_ex.
double m_in_score(const ModelState& state, const EvalItem& item);
bool m_ex_hit(const ModelState& state, const EvalItem& item);

// Selects entities that are frequent in A (count >= median) and rare in B
// (count < median), then emits one inclusive/exclusive pair per qualifying
// occurrence in A. Items are ordered by (doc_id, span start); the pair p gets
// item ids 2p (inclusive) and 2p+1 (exclusive).
std::vector<EvalItem> build_entity_evalset(std::span<const Document> a,
                                           std::span<const Document> b,
                                           const EntityDictionary& dict);

// Keeps the pairs whose exclusive item is a hit under `state`.
std::vector<EvalItem> filter_memorized(const ModelState& state, std::span<const EvalItem> items);

std::vector<EvalItem> select_mode(std::span<const EvalItem> items, EvalMode mode);
std::vector<EvalItem> select_entities(std::span<const EvalItem> items,
                                      std::span<const std::int64_t> entity_ids);

// The entity-involved sample set behind PPL_ent and M(f)_ent: the 64-token
// windows of the inclusive items, and their 32 teacher-forced target
// predictions each.
std::vector<Document> entity_windows(std::span<const EvalItem> items);
std::vector<MfContext> entity_contexts(std::span<const EvalItem> items);

// Mean exclusive-item hit rate per entity.
std::map<std::int64_t, double> per_entity_accuracy(const ModelState& state,
                                                   std::span<const EvalItem> items);

struct DifficultyBucket {
  std::size_t bucket_id = 0;
  std::vector<std::int64_t> entity_ids;
  double mean_accuracy = 0.0;
};

// Sorts by (accuracy, entity id) and cuts k contiguous buckets whose sizes
// differ by at most one, larger buckets first. Bucket 0 is the hardest.
std::vector<DifficultyBucket> bucket_by_difficulty(const std::map<std::int64_t, double>& accuracy,
                                                   std::size_t k);

struct TypeMetrics {
  double ppl = 0.0;
  double mf = 0.0;
  double m_in = 0.0;
  double m_ex = 0.0;
  std::size_t n_items = 0;
};

struct MetricReport {
  std::int64_t step = 0;
  std::int64_t tokens_seen = 0;
  double ppl = 0.0;
  double mf = 0.0;
  double m_in = 0.0;
  double m_ex = 0.0;
  std::size_t n_items = 0;
  std::map<EntityType, TypeMetrics> per_type;
  std::string phase;
  std::int64_t seed = 0;
};

// Overall and per-type metrics. `docs` and `contexts` feed PPL and M(f);
// a document counts toward every type among its entity spans.
MetricReport per_type_report(const ModelState& state, std::span<const EvalItem> items,
                             std::span<const MfContext> contexts, std::span<const Document> docs);

// Convenience: per_type_report on entity_windows/entity_contexts of `items`.
MetricReport evaluate_items(const ModelState& state, std::span<const EvalItem> items);

// metrics.csv: step,tokens_seen,ppl,mf,m_in,m_ex,n_items, then
// ppl_T,mf_T,m_in_T,m_ex_T for T in MISC,PER,LOC,ORG, then phase,seed.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricReport& report);
std::vector<MetricReport> read_metrics_csv(const std::filesystem::path& path);
// %.10g
std::string format_real(double value);

void write_evalset_jsonl(const std::filesystem::path& path, std::span<const EvalItem> items);
std::vector<EvalItem> read_evalset_jsonl(const std::filesystem::path& path);

}  // namespace forgetrace
