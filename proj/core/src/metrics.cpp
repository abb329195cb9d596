// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include "forgetrace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "forgetrace/error.hpp"

namespace forgetrace {

std::string_view to_string(EvalMode mode) {
  return mode == EvalMode::inclusive ? "inclusive" : "exclusive";
}

EvalMode parse_eval_mode(std::string_view text) {
  if (text == "inclusive") return EvalMode::inclusive;
  if (text == "exclusive") return EvalMode::exclusive;
  throw FormatError("unknown eval mode '" + std::string(text) + "'");
}

TokenSeq EvalItem::window() const {
  TokenSeq w = prefix;
  w.insert(w.end(), target.begin(), target.end());
  return w;
}

bool is_substring(std::span<const TokenId> needle, std::span<const TokenId> haystack) {
  if (needle.empty()) return true;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
         haystack.end();
}

double positional_accuracy(std::span<const TokenId> decoded, std::span<const TokenId> target) {
  if (decoded.size() != target.size()) throw ConfigError("length mismatch");
  if (target.empty()) throw ConfigError("empty target");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < target.size(); ++i) hits += decoded[i] == target[i];
  return static_cast<double>(hits) / static_cast<double>(target.size());
}

double ppl(const ModelState& state, std::span<const Document> docs) {
  if (docs.empty()) throw ConfigError("empty document set");
  const auto ctx = static_cast<std::size_t>(state.config.context_len);
  std::vector<TokenSeq> windows;
  for (const auto& d : docs) {
    if (d.tokens.size() < 2) throw ConfigError("document shorter than 2 tokens");
    for (std::size_t start = 0; start + 1 < d.tokens.size(); start += ctx - 1) {
      const std::size_t end = std::min(d.tokens.size(), start + ctx);
      windows.emplace_back(d.tokens.begin() + static_cast<std::ptrdiff_t>(start),
                           d.tokens.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  // Batches of windows in input order; the sum runs in that fixed order.
  constexpr std::size_t kRowsPerBatch = 32;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < windows.size(); i += kRowsPerBatch) {
    const std::size_t n = std::min(kRowsPerBatch, windows.size() - i);
    const Batch batch = rows_batch(std::span<const TokenSeq>(windows).subspan(i, n));
    const std::size_t m = batch.supervised_count();
    total += batch_loss(state, batch) * static_cast<double>(m);
    count += m;
  }
  return std::exp(total / static_cast<double>(count));
}

double mf(const ModelState& state, std::span<const MfContext> contexts) {
  if (contexts.empty()) throw ConfigError("empty context set");
  // Contexts that extend the previous one by its answer share one forward pass.
  std::size_t hits = 0;
  std::size_t i = 0;
  while (i < contexts.size()) {
    if (contexts[i].s.empty()) throw ConfigError("empty context");
    TokenSeq chain = contexts[i].s;
    std::vector<std::pair<std::size_t, TokenId>> probes{{chain.size() - 1, contexts[i].y}};
    std::size_t j = i + 1;
    while (j < contexts.size() &&
           chain.size() + 1 <= static_cast<std::size_t>(state.config.context_len)) {
      const auto& prev = contexts[j - 1];
      const auto& next = contexts[j];
      if (next.s.size() != chain.size() + 1 || next.s.back() != prev.y ||
          !std::equal(chain.begin(), chain.end(), next.s.begin())) {
        break;
      }
      chain.push_back(prev.y);
      probes.emplace_back(chain.size() - 1, next.y);
      ++j;
    }
    const Logits logits = forward(state, chain);
    for (const auto& [row, y] : probes) {
      hits += static_cast<TokenId>(argmax(logits.row(row))) == y;
    }
    i = j;
  }
  return static_cast<double>(hits) / static_cast<double>(contexts.size());
}

namespace {

void require_mode(std::span<const EvalItem> items, EvalMode mode) {
  if (items.empty()) throw ConfigError("empty item set");
  for (const auto& it : items) {
    if (it.mode != mode) throw ConfigError("mode mismatch");
  }
}

}  // namespace

double m_in_score(const ModelState& state, const EvalItem& item) {
  const TokenSeq decoded = greedy_decode(state, item.prefix, item.target.size());
  return positional_accuracy(decoded, item.target);
}

bool m_ex_hit(const ModelState& state, const EvalItem& item) {
  const TokenSeq decoded = greedy_decode(state, item.prefix, item.target.size());
  return is_substring(item.entity_tokens, decoded);
}

double m_in(const ModelState& state, std::span<const EvalItem> items) {
  require_mode(items, EvalMode::inclusive);
  double hits = 0.0;
  std::size_t total = 0;
  for (const auto& it : items) {
    hits += m_in_score(state, it) * static_cast<double>(it.target.size());
    total += it.target.size();
  }
  return hits / static_cast<double>(total);
}

double m_ex(const ModelState& state, std::span<const EvalItem> items) {
  require_mode(items, EvalMode::exclusive);
  std::size_t hits = 0;
  for (const auto& it : items) hits += m_ex_hit(state, it);
  return static_cast<double>(hits) / static_cast<double>(items.size());
}

std::vector<EvalItem> select_mode(std::span<const EvalItem> items, EvalMode mode) {
  std::vector<EvalItem> out;
  for (const auto& it : items) {
    if (it.mode == mode) out.push_back(it);
  }
  return out;
}

std::vector<EvalItem> select_entities(std::span<const EvalItem> items,
                                      std::span<const std::int64_t> entity_ids) {
  std::vector<EvalItem> out;
  for (const auto& it : items) {
    if (std::find(entity_ids.begin(), entity_ids.end(), it.entity_id) != entity_ids.end()) {
      out.push_back(it);
    }
  }
  return out;
}

std::vector<Document> entity_windows(std::span<const EvalItem> items) {
  std::vector<Document> out;
  for (const auto& it : items) {
    if (it.mode != EvalMode::inclusive) continue;
    Document d;
    d.doc_id = it.doc_id;
    d.tokens = it.window();
    const std::size_t end = it.prefix.size();
    d.entities.push_back({it.entity_id, end - it.entity_tokens.size(), end, it.type});
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<MfContext> entity_contexts(std::span<const EvalItem> items) {
  std::vector<MfContext> out;
  for (const auto& it : items) {
    if (it.mode != EvalMode::inclusive) continue;
    const TokenSeq w = it.window();
    for (std::size_t i = it.prefix.size(); i < w.size(); ++i) {
      out.push_back({TokenSeq(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(i)), w[i],
                     it.type});
    }
  }
  return out;
}

std::map<std::int64_t, double> per_entity_accuracy(const ModelState& state,
                                                   std::span<const EvalItem> items) {
  std::map<std::int64_t, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& it : items) {
    if (it.mode != EvalMode::exclusive) continue;
    auto& [hits, n] = counts[it.entity_id];
    hits += m_ex_hit(state, it);
    ++n;
  }
  std::map<std::int64_t, double> out;
  for (const auto& [id, c] : counts) {
    out[id] = static_cast<double>(c.first) / static_cast<double>(c.second);
  }
  return out;
}

std::vector<DifficultyBucket> bucket_by_difficulty(const std::map<std::int64_t, double>& accuracy,
                                                   std::size_t k) {
  if (k < 2) throw ConfigError("k must be ≥ 2");
  if (k > accuracy.size()) throw ConfigError("more buckets than entities");
  std::vector<std::pair<double, std::int64_t>> sorted;
  for (const auto& [id, acc] : accuracy) sorted.emplace_back(acc, id);
  std::sort(sorted.begin(), sorted.end());

  const std::size_t base = sorted.size() / k;
  const std::size_t extra = sorted.size() % k;
  std::vector<DifficultyBucket> out;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < k; ++b) {
    DifficultyBucket bucket;
    bucket.bucket_id = b;
    const std::size_t n = base + (b < extra ? 1 : 0);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i, ++pos) {
      bucket.entity_ids.push_back(sorted[pos].second);
      sum += sorted[pos].first;
    }
    bucket.mean_accuracy = sum / static_cast<double>(n);
    out.push_back(std::move(bucket));
  }
  return out;
}

MetricReport per_type_report(const ModelState& state, std::span<const EvalItem> items,
                             std::span<const MfContext> contexts, std::span<const Document> docs) {
  MetricReport r;
  const auto inc = select_mode(items, EvalMode::inclusive);
  const auto exc = select_mode(items, EvalMode::exclusive);
  r.n_items = exc.size();
  if (!docs.empty()) r.ppl = ppl(state, docs);
  if (!contexts.empty()) r.mf = mf(state, contexts);
  if (!inc.empty()) r.m_in = m_in(state, inc);
  if (!exc.empty()) r.m_ex = m_ex(state, exc);

  for (EntityType t : kEntityTypes) {
    std::vector<EvalItem> ti, te;
    for (const auto& it : inc) {
      if (it.type == t) ti.push_back(it);
    }
    for (const auto& it : exc) {
      if (it.type == t) te.push_back(it);
    }
    std::vector<MfContext> tc;
    for (const auto& c : contexts) {
      if (c.type == t) tc.push_back(c);
    }
    std::vector<Document> td;
    for (const auto& d : docs) {
      if (std::any_of(d.entities.begin(), d.entities.end(),
                      [t](const EntitySpan& s) { return s.type == t; })) {
        td.push_back(d);
      }
    }
    if (ti.empty() && te.empty() && tc.empty() && td.empty()) continue;
    TypeMetrics m;
    m.n_items = te.size();
    if (!td.empty()) m.ppl = ppl(state, td);
    if (!tc.empty()) m.mf = mf(state, tc);
    if (!ti.empty()) m.m_in = m_in(state, ti);
    if (!te.empty()) m.m_ex = m_ex(state, te);
    r.per_type[t] = m;
  }
  return r;
}

MetricReport evaluate_items(const ModelState& state, std::span<const EvalItem> items) {
  const auto docs = entity_windows(items);
  const auto contexts = entity_contexts(items);
  return per_type_report(state, items, contexts, docs);
}

// ---------------------------------------------------------------------------
// CSV

std::string format_real(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", value);
  return buf;
}

std::string metrics_csv_header() {
  std::string h = "step,tokens_seen,ppl,mf,m_in,m_ex,n_items";
  for (EntityType t : kEntityTypes) {
    const std::string s(to_string(t));
    h += ",ppl_" + s + ",mf_" + s + ",m_in_" + s + ",m_ex_" + s;
  }
  h += ",phase,seed";
  return h;
}

std::string metrics_csv_row(const MetricReport& r) {
  std::string row = std::to_string(r.step) + "," + std::to_string(r.tokens_seen) + "," +
                    format_real(r.ppl) + "," + format_real(r.mf) + "," + format_real(r.m_in) +
                    "," + format_real(r.m_ex) + "," + std::to_string(r.n_items);
  for (EntityType t : kEntityTypes) {
    auto it = r.per_type.find(t);
    if (it == r.per_type.end()) {
      row += ",,,,";
      continue;
    }
    const TypeMetrics& m = it->second;
    row += "," + format_real(m.ppl) + "," + format_real(m.mf) + "," + format_real(m.m_in) + "," +
           format_real(m.m_ex);
  }
  row += "," + r.phase + "," + std::to_string(r.seed);
  return row;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<MetricReport> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header()) {
    throw FormatError("unexpected metrics header in " + path.string());
  }
  std::vector<MetricReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 7 + 4 * kEntityTypes.size() + 2) {
      throw FormatError("malformed metrics row in " + path.string());
    }
    MetricReport r;
    r.step = std::stoll(cells[0]);
    r.tokens_seen = std::stoll(cells[1]);
    r.ppl = std::stod(cells[2]);
    r.mf = std::stod(cells[3]);
    r.m_in = std::stod(cells[4]);
    r.m_ex = std::stod(cells[5]);
    r.n_items = std::stoull(cells[6]);
    for (std::size_t t = 0; t < kEntityTypes.size(); ++t) {
      const std::size_t base = 7 + 4 * t;
      if (cells[base].empty()) continue;
      TypeMetrics m;
      m.ppl = std::stod(cells[base]);
      m.mf = std::stod(cells[base + 1]);
      m.m_in = std::stod(cells[base + 2]);
      m.m_ex = std::stod(cells[base + 3]);
      r.per_type[kEntityTypes[t]] = m;
    }
    r.phase = cells[cells.size() - 2];
    r.seed = std::stoll(cells.back());
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace forgetrace
