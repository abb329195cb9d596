// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include "forgetrace/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "forgetrace/checkpoint.hpp"
#include "forgetrace/error.hpp"
#include "forgetrace/random.hpp"

namespace forgetrace {

double RunLedger::ratio() const {
  if (base_updates <= 0) throw Error("zero base updates");
  return static_cast<double>(base_updates + replay_updates) / static_cast<double>(base_updates);
}

double cost_report(const RunLedger& ledger, const RunConfig& config) {
  const double r = ledger.ratio();
  if (!replays(config.strategy)) {
    if (r != 1.0) throw Error("cost ratio " + format_real(r) + " for a non-replaying run");
    return r;
  }
  const double f = static_cast<double>(config.replay_epochs);
  const double expected = 1.0 + f / static_cast<double>(config.replay_interval);
  const double bound = f / static_cast<double>(ledger.base_updates);
  if (std::abs(r - expected) > bound) {
    throw Error("cost ratio " + format_real(r) + " outside " + format_real(expected) + " ± " +
                format_real(bound));
  }
  return r;
}

std::string ledger_csv(const RunLedger& l) {
  return "base_updates,replay_updates,replay_events,tokens_seen,ratio\n" +
         std::to_string(l.base_updates) + "," + std::to_string(l.replay_updates) + "," +
         std::to_string(l.replay_events) + "," + std::to_string(l.tokens_seen) + "," +
         format_real(l.base_updates > 0 ? l.ratio() : 0.0) + "\n";
}

// ---------------------------------------------------------------------------
// Data

std::vector<EvalItem> cap_pairs_per_entity(std::span<const EvalItem> items, std::size_t n) {
  if (n == 0) return {items.begin(), items.end()};
  std::map<std::int64_t, std::set<std::int64_t>> pairs;
  std::set<std::int64_t> keep;
  for (const auto& it : items) {
    auto& p = pairs[it.entity_id];
    if (p.contains(it.pair_id())) continue;
    if (p.size() < n) {
      p.insert(it.pair_id());
      keep.insert(it.pair_id());
    }
  }
  std::vector<EvalItem> out;
  for (const auto& it : items) {
    if (keep.contains(it.pair_id())) out.push_back(it);
  }
  return out;
}

RunData load_corpora(const RunConfig& config, const std::filesystem::path& data_dir) {
  RunData d;
  d.vocab = Vocab::load(data_dir / config.vocab);
  d.a = read_documents_jsonl(data_dir / config.corpus_a, Source::A);
  d.b = read_documents_jsonl(data_dir / config.corpus_b, Source::B);
  for (auto& doc : d.b) doc.source = Source::B;
  if (d.vocab.size() > static_cast<std::size_t>(config.model.vocab_size)) {
    throw ConfigError("vocab has " + std::to_string(d.vocab.size()) +
                      " tokens but vocab_size is " + std::to_string(config.model.vocab_size));
  }
  for (auto* docs : {&d.a, &d.b}) {
    for (auto& doc : *docs) {
      if (doc.tokens.empty()) doc.tokens = tokenize(doc.text, d.vocab);
    }
  }
  std::set<std::int64_t> ids;
  for (const auto* docs : {&d.a, &d.b}) {
    for (const auto& doc : *docs) {
      if (!ids.insert(doc.doc_id).second) {
        throw ConfigError("duplicate doc id " + std::to_string(doc.doc_id));
      }
    }
  }
  const auto entities_path = data_dir / config.entities;
  if (std::filesystem::exists(entities_path)) {
    const auto records = read_entities_jsonl(entities_path);
    d.dict = EntityDictionary(records, d.vocab);
    tag_documents(d.a, d.dict, d.vocab);
    tag_documents(d.b, d.dict, d.vocab);
  }
  return d;
}

RunData load_run_data(const RunConfig& config, const std::filesystem::path& data_dir) {
  RunData d = load_corpora(config, data_dir);
  const auto evalset_path = data_dir / config.evalset;
  std::vector<EvalItem> items = std::filesystem::exists(evalset_path)
                                    ? read_evalset_jsonl(evalset_path)
                                    : build_entity_evalset(d.a, d.b, d.dict);
  d.items = cap_pairs_per_entity(items, config.eval_pairs_per_entity);
  return d;
}

// ---------------------------------------------------------------------------
// Events

void EventLog::add(std::int64_t step, std::string_view kind, std::string_view detail) {
  std::string line = "step=" + std::to_string(step) + " event=" + std::string(kind);
  if (!detail.empty()) line += " " + std::string(detail);
  lines_.push_back(std::move(line));
}

std::size_t EventLog::count(std::string_view kind) const {
  const std::string needle = " event=" + std::string(kind);
  return static_cast<std::size_t>(std::count_if(lines_.begin(), lines_.end(), [&](const auto& l) {
    const auto pos = l.find(needle);
    return pos != std::string::npos &&
           (pos + needle.size() == l.size() || l[pos + needle.size()] == ' ');
  }));
}

void EventLog::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& l : lines_) out << l << '\n';
}

// ---------------------------------------------------------------------------
// Planning

namespace {

std::uint64_t epoch_seed(std::int64_t seed, std::size_t epoch) {
  return substream_seed(static_cast<std::uint64_t>(seed),
                        "corpus-shuffle/" + std::to_string(epoch));
}

void append_batches(TrainingPlan& plan, std::vector<const Document*> order,
                    std::size_t batch_size) {
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    plan.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
  }
}

std::vector<const Document*> shuffled(std::span<const Document> docs, std::uint64_t seed) {
  std::vector<const Document*> order;
  order.reserve(docs.size());
  for (const auto& d : docs) order.push_back(&d);
  Rng rng(seed);
  rng.shuffle(std::span<const Document*>(order));
  return order;
}

// Same permutation compose_corpus(mixed) applies to the concatenation A+B.
std::vector<const Document*> mixed_order(const RunData& data, std::uint64_t seed) {
  std::vector<const Document*> order;
  order.reserve(data.a.size() + data.b.size());
  for (const auto& d : data.a) order.push_back(&d);
  for (const auto& d : data.b) order.push_back(&d);
  Rng rng(seed);
  rng.shuffle(std::span<const Document*>(order));
  return order;
}

void append_epoch(TrainingPlan& plan, const RunConfig& config, const RunData& data,
                  std::int64_t seed, std::size_t epoch) {
  append_batches(plan, mixed_order(data, epoch_seed(seed, epoch)), config.batch_size);
}

}  // namespace

TrainingPlan make_plan(const RunConfig& config, const RunData& data, std::int64_t seed) {
  TrainingPlan plan;
  if (config.corpus_mode == ComposeMode::sequential_AB) {
    std::size_t epoch = 0;
    for (std::size_t e = 0; e < config.a_epochs; ++e, ++epoch) {
      append_batches(plan, shuffled(data.a, epoch_seed(seed, epoch)), config.batch_size);
    }
    plan.boundary = plan.batches.size();
    for (std::size_t e = 0; e < config.epochs; ++e, ++epoch) {
      append_batches(plan, shuffled(data.b, epoch_seed(seed, epoch)), config.batch_size);
    }
  } else {
    for (std::size_t e = 0; e < config.epochs; ++e) append_epoch(plan, config, data, seed, e);
    plan.boundary = plan.batches.size();
  }
  if (plan.batches.empty()) throw ConfigError("empty corpus");
  return plan;
}

ModelConfig resolve_model(const RunConfig& config, std::size_t total_steps, std::int64_t seed) {
  ModelConfig m = config.model;
  m.init_seed = substream_seed(static_cast<std::uint64_t>(seed), "init");
  m.total_steps = static_cast<std::int64_t>(std::max<std::size_t>(total_steps, 1));
  m.warmup_steps = config.warmup_steps >= 0 ? config.warmup_steps : m.total_steps / 100;
  if (m.warmup_steps >= m.total_steps) m.warmup_steps = 0;
  return m;
}

// ---------------------------------------------------------------------------
// Training helpers

namespace {

std::vector<double> per_document_loss(const PackedBatch& packed, std::span<const double> nll,
                                      std::size_t n_docs) {
  std::vector<double> sum(n_docs, 0.0);
  std::vector<std::size_t> count(n_docs, 0);
  for (std::size_t i = 0; i < packed.owner.size(); ++i) {
    const auto o = packed.owner[i];
    if (o < 0 || !packed.batch.mask[i]) continue;
    sum[static_cast<std::size_t>(o)] += nll[i];
    ++count[static_cast<std::size_t>(o)];
  }
  for (std::size_t d = 0; d < n_docs; ++d) {
    if (count[d] > 0) sum[d] /= static_cast<double>(count[d]);
  }
  return sum;
}

MetricReport aborted_row(std::int64_t step, std::int64_t tokens, std::int64_t seed) {
  MetricReport r;
  r.step = step;
  r.tokens_seen = tokens;
  r.ppl = r.mf = r.m_in = r.m_ex = std::numeric_limits<double>::quiet_NaN();
  r.phase = "aborted";
  r.seed = seed;
  return r;
}

class MetricsFile {
 public:
  explicit MetricsFile(const std::optional<std::filesystem::path>& dir) {
    if (!dir) return;
    std::filesystem::create_directories(*dir);
    out_.open(*dir / "metrics.csv", std::ios::trunc);
    if (!out_) throw Error("cannot write " + (*dir / "metrics.csv").string());
    out_ << metrics_csv_header() << '\n';
    out_.flush();
  }
  void add(const MetricReport& r) {
    if (!out_.is_open()) return;
    out_ << metrics_csv_row(r) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void write_run_files(const std::filesystem::path& dir, const RunConfig& config,
                     const RunOutputs& out, std::int64_t seed) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream l(dir / "ledger.csv", std::ios::trunc);
    l << ledger_csv(out.ledger);
  }
  {
    RunConfig c = config;
    c.seeds = {seed};
    std::ofstream cfg(dir / "config.cfg", std::ios::trunc);
    cfg << to_text(c);
  }
  out.events.write(dir / "events.log");
  save_checkpoint(dir / "checkpoint.ftrc", out.state);
  if (out.memory) out.memory->dump(dir / "memory.jsonl");
}

void report_progress(const RunOptions& options, const MetricReport& r) {
  if (!options.progress) return;
  options.progress("seed " + std::to_string(r.seed) + " step " + std::to_string(r.step) + " [" +
                   r.phase + "] ppl " + format_real(r.ppl) + " mf " + format_real(r.mf) +
                   " m_in " + format_real(r.m_in) + " m_ex " + format_real(r.m_ex) + " n " +
                   std::to_string(r.n_items));
}

}  // namespace

std::vector<TokenSeq> item_windows(std::span<const EvalItem> items) {
  std::vector<TokenSeq> out;
  std::set<TokenSeq> seen;
  for (const auto& it : items) {
    TokenSeq w = it.window();
    if (seen.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

std::int64_t train_on_windows(ModelState& state, std::span<const TokenSeq> windows,
                              std::int64_t epochs, double lr, std::size_t batch_rows, Rng& rng,
                              const std::function<void()>& on_update) {
  if (windows.empty() || epochs <= 0) return 0;
  if (batch_rows == 0) throw ConfigError("batch_rows must be ≥ 1");
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::int64_t updates = 0;
  for (std::int64_t e = 0; e < epochs; ++e) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i = 0; i < order.size(); i += batch_rows) {
      std::vector<TokenSeq> rows;
      for (std::size_t j = i; j < std::min(order.size(), i + batch_rows); ++j) {
        rows.push_back(windows[order[j]]);
      }
      train_step(state, rows_batch(rows), lr);
      ++updates;
      if (on_update) on_update();
    }
  }
  return updates;
}

// ---------------------------------------------------------------------------
// Pretraining

RunOutputs run_pretraining(const RunConfig& config, const RunData& data,
                           const RunOptions& options) {
  const TrainingPlan plan = make_plan(config, data, options.seed);
  const bool sequential = config.corpus_mode == ComposeMode::sequential_AB;
  const bool replay = replays(config.strategy);
  if (data.items.empty()) throw ConfigError("empty eval set");

  RunOutputs out;
  out.state = init_model(resolve_model(config, plan.batches.size(), options.seed));
  out.items = data.items;
  if (replay) out.memory.emplace(config.memory_config());
  if (sequential) out.boundary_step = static_cast<std::int64_t>(plan.boundary);

  MetricsFile metrics(options.out_dir);
  Rng retrieval_rng(substream_seed(static_cast<std::uint64_t>(options.seed), "retrieval"));
  const auto n_steps = static_cast<std::int64_t>(plan.batches.size());
  const auto boundary = static_cast<std::int64_t>(plan.boundary);

  auto evaluate = [&](std::int64_t step, const std::string& phase) {
    MetricReport r = evaluate_items(out.state, out.items);
    r.step = step;
    r.tokens_seen = out.ledger.tokens_seen;
    r.phase = phase;
    r.seed = options.seed;
    out.rows.push_back(r);
    metrics.add(r);
    out.events.add(step, "eval", "phase=" + phase);
    report_progress(options, r);
  };
  auto update = [&](const Batch& batch, double lr) {
    TrainResult res = train_step(out.state, batch, lr);
    if (options.on_update) options.on_update();
    return res;
  };

  std::int64_t step = 0;
  try {
    for (const auto& docs_ptrs : plan.batches) {
      std::vector<Document> docs;
      docs.reserve(docs_ptrs.size());
      for (const Document* d : docs_ptrs) docs.push_back(*d);
      const PackedBatch packed = pack_documents(docs, config.seq_len);
      const double lr = lr_at(step, out.state.config);

      TrainResult res = update(packed.batch, lr);
      ++step;
      ++out.ledger.base_updates;
      out.ledger.tokens_seen += static_cast<std::int64_t>(packed.real_tokens);

      if (replay && step % config.replay_interval == 0) {
        const auto ids = out.memory->retrieve(docs, docs.size(), retrieval_rng);
        if (!ids.empty()) {
          std::vector<const TokenSeq*> seqs;
          for (auto id : ids) seqs.push_back(&out.memory->entry(id).tokens);
          const PackedBatch replay_batch = pack_documents(seqs, config.seq_len);
          for (std::int64_t e = 0; e < config.replay_epochs; ++e) {
            update(replay_batch.batch, lr);
            ++out.ledger.replay_updates;
          }
          ++out.ledger.replay_events;
          out.memory->mark_replayed(ids);
          out.events.add(step, "replay",
                         "entries=" + std::to_string(ids.size()) +
                             " epochs=" + std::to_string(config.replay_epochs));
        } else {
          out.events.add(step, "replay_skipped", "reason=no_eligible_entries");
        }
      }
      if (replay) {
        out.memory->store(docs, per_document_loss(packed, res.position_nll, docs.size()), step);
      }

      if (options.out_dir && config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
        std::filesystem::create_directories(*options.out_dir / "checkpoints");
        save_checkpoint(*options.out_dir / "checkpoints" / ("step_" + std::to_string(step) + ".ftrc"),
                        out.state);
        out.events.add(step, "checkpoint");
      }

      bool evaluated = false;
      if (sequential && step == boundary) {
        out.events.add(step, "boundary");
        if (config.filter_memorized) {
          out.items = filter_memorized(out.state, data.items);
          out.events.add(step, "filter", "kept_items=" + std::to_string(out.items.size()));
          if (out.items.empty()) {
            throw Error(
                "eval set empty after filter_memorized at the A->B boundary; train longer on A "
                "or adjust the corpus or entity dictionary");
          }
        }
        out.boundary_items = out.items;
        evaluate(step, "boundary");
        evaluated = true;
      } else if (sequential ? (step > boundary && (step - boundary) % config.eval_every == 0)
                            : step % config.eval_every == 0) {
        if (step != n_steps) {
          evaluate(step, sequential ? "B" : "train");
          evaluated = true;
        }
      }
      if (step == n_steps && !evaluated) evaluate(step, "final");
    }
  } catch (const DivergenceError&) {
    const MetricReport r = aborted_row(step, out.ledger.tokens_seen, options.seed);
    out.rows.push_back(r);
    metrics.add(r);
    out.events.add(step, "aborted", "reason=divergence");
    if (options.out_dir) write_run_files(*options.out_dir, config, out, options.seed);
    throw;
  }
  if (options.out_dir) write_run_files(*options.out_dir, config, out, options.seed);
  return out;
}

RunOutputs run_ab_transition(const RunConfig& config, const RunData& data,
                             const RunOptions& options) {
  if (config.corpus_mode != ComposeMode::sequential_AB) {
    throw ConfigError("A->B transition requires corpus_mode = sequential_AB");
  }
  return run_pretraining(config, data, options);
}

// ---------------------------------------------------------------------------
// Upper bound

UpperBoundResult run_upper_bound(const ModelState& checkpoint, std::span<const EvalItem> items,
                                 const RunConfig& config, std::int64_t seed) {
  const auto exclusive = select_mode(items, EvalMode::exclusive);
  if (exclusive.empty()) throw ConfigError("empty eval set");
  const auto windows = item_windows(items);
  const double lr = config.upper_bound_lr > 0.0 ? config.upper_bound_lr : checkpoint.config.max_lr;
  Rng rng(substream_seed(static_cast<std::uint64_t>(seed), "upper-bound"));

  UpperBoundResult out;
  ModelState state = checkpoint;
  double best = m_ex(state, exclusive);
  out.m_ex_history.push_back(best);
  out.state = state;
  for (std::int64_t e = 0; e < config.upper_bound_max_epochs; ++e) {
    train_on_windows(state, windows, 1, lr, config.window_batch_rows, rng);
    ++out.epochs;
    const double score = m_ex(state, exclusive);
    out.m_ex_history.push_back(score);
    if (!(score > best)) break;
    best = score;
    out.state = state;
  }
  out.report = evaluate_items(out.state, items);
  out.report.phase = "upper_bound";
  out.report.seed = seed;
  return out;
}

UpperBoundResult run_upper_bound(const std::filesystem::path& checkpoint,
                                 std::span<const EvalItem> items, const RunConfig& config,
                                 std::int64_t seed) {
  if (!std::filesystem::exists(checkpoint)) {
    throw Error("missing checkpoint " + checkpoint.string());
  }
  return run_upper_bound(load_checkpoint(checkpoint), items, config, seed);
}

RunOutputs run_strategy(const RunConfig& config, const RunData& data, const RunOptions& options) {
  RunOutputs out = run_pretraining(config, data, options);
  if (config.strategy != Strategy::upper_bound) return out;

  UpperBoundResult ub = run_upper_bound(out.state, out.items, config, options.seed);
  const std::int64_t step = out.ledger.base_updates;
  ub.report.step = step;
  ub.report.tokens_seen = out.ledger.tokens_seen;
  out.events.add(step, "upper_bound", "epochs=" + std::to_string(ub.epochs));
  out.rows.push_back(ub.report);
  report_progress(options, ub.report);
  if (options.out_dir) {
    std::ofstream m(*options.out_dir / "metrics.csv", std::ios::app);
    m << metrics_csv_row(ub.report) << '\n';
    out.events.write(*options.out_dir / "events.log");
    save_checkpoint(*options.out_dir / "upper_bound.ftrc", ub.state);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forgetting curves

CurveOutputs run_forgetting_curve(const RunConfig& config, const RunData& data,
                                  const RunOptions& options) {
  if (data.items.empty()) throw ConfigError("empty eval set");
  RunConfig base_cfg = config;
  base_cfg.corpus_mode = ComposeMode::mixed_shuffled;
  const TrainingPlan base_plan = make_plan(base_cfg, data, options.seed);

  // The continuation is the next shuffled pass, cut to curve_steps.
  TrainingPlan cont;
  append_epoch(cont, base_cfg, data, options.seed, base_cfg.epochs);
  if (config.curve_steps > 0 && static_cast<std::size_t>(config.curve_steps) < cont.batches.size()) {
    cont.batches.resize(static_cast<std::size_t>(config.curve_steps));
  }
  const auto base_steps = static_cast<std::int64_t>(base_plan.batches.size());
  const auto cont_steps = static_cast<std::int64_t>(cont.batches.size());

  CurveOutputs out;
  out.base_steps = base_steps;
  out.base = init_model(resolve_model(config, base_plan.batches.size() + cont.batches.size(),
                                      options.seed));
  std::int64_t tokens = 0;
  auto train_batch = [&](ModelState& state, const std::vector<const Document*>& ptrs,
                         std::int64_t step) {
    std::vector<Document> docs;
    for (const Document* d : ptrs) docs.push_back(*d);
    const PackedBatch packed = pack_documents(docs, config.seq_len);
    train_step(state, packed.batch, lr_at(step, state.config));
    if (options.on_update) options.on_update();
    return static_cast<std::int64_t>(packed.real_tokens);
  };
  for (std::int64_t s = 0; s < base_steps; ++s) {
    tokens += train_batch(out.base, base_plan.batches[static_cast<std::size_t>(s)], s);
  }
  if (options.progress) options.progress("curve base pass done at step " + std::to_string(base_steps));

  out.entity_accuracy = per_entity_accuracy(out.base, data.items);
  out.buckets = bucket_by_difficulty(out.entity_accuracy, config.curve_buckets);
  const auto& bucket = out.buckets.at(config.curve_bucket);
  out.bucket_items = select_entities(data.items, bucket.entity_ids);
  const auto windows = item_windows(out.bucket_items);

  std::vector<std::int64_t> intensities = config.curve_epochs;
  const std::int64_t periodic_from =
      config.periodic_from >= 0 ? config.periodic_from
                                : *std::max_element(intensities.begin(), intensities.end());

  auto run_series = [&](std::int64_t e, bool periodic) {
    CurveSeries series;
    series.intensive_epochs = e;
    series.periodic = periodic;
    series.name = periodic ? "periodic" : "e" + std::to_string(e);
    ModelState state = out.base;
    Rng rng(substream_seed(static_cast<std::uint64_t>(options.seed), "windows/" + series.name));
    const double intensive_lr =
        config.curve_lr > 0.0 ? config.curve_lr : lr_at(base_steps, state.config);
    std::int64_t series_tokens = tokens;

    auto evaluate = [&](std::int64_t step, const std::string& phase) {
      MetricReport r = evaluate_items(state, out.bucket_items);
      r.step = step;
      r.tokens_seen = series_tokens;
      r.phase = phase;
      r.seed = options.seed;
      series.rows.push_back(r);
      series.events.add(step, "eval", "phase=" + phase);
      report_progress(options, r);
    };

    const auto n = train_on_windows(state, windows, e, intensive_lr, config.window_batch_rows, rng,
                                    options.on_update);
    series.events.add(base_steps, "intensive",
                      "epochs=" + std::to_string(e) + " updates=" + std::to_string(n));
    evaluate(base_steps, "intensive");
    for (std::int64_t s = 1; s <= cont_steps; ++s) {
      const std::int64_t global = base_steps + s;
      series_tokens += train_batch(state, cont.batches[static_cast<std::size_t>(s - 1)], global - 1);
      if (periodic && s % config.periodic_interval == 0) {
        const double lr = config.curve_lr > 0.0 ? config.curve_lr : lr_at(global - 1, state.config);
        train_on_windows(state, windows, config.periodic_epochs, lr, config.window_batch_rows, rng,
                         options.on_update);
        ++series.periodic_sessions;
        series.events.add(global, "periodic", "epochs=" + std::to_string(config.periodic_epochs));
      }
      if (s % config.curve_eval_every == 0 || s == cont_steps) {
        evaluate(global, s == cont_steps ? "final" : "resume");
      }
    }
    return series;
  };

  for (std::int64_t e : intensities) out.series.push_back(run_series(e, false));
  if (config.periodic) out.series.push_back(run_series(periodic_from, true));

  if (options.out_dir) {
    const auto dir = *options.out_dir;
    std::filesystem::create_directories(dir / "curves");
    for (const auto& s : out.series) {
      std::ofstream csv(dir / "curves" / (s.name + ".csv"), std::ios::trunc);
      csv << metrics_csv_header() << '\n';
      for (const auto& r : s.rows) csv << metrics_csv_row(r) << '\n';
    }
    {
      std::ofstream b(dir / "buckets.csv", std::ios::trunc);
      b << "bucket_id,entity_id,accuracy,mean_accuracy\n";
      for (const auto& bk : out.buckets) {
        for (auto id : bk.entity_ids) {
          b << bk.bucket_id << "," << id << "," << format_real(out.entity_accuracy.at(id)) << ","
            << format_real(bk.mean_accuracy) << "\n";
        }
      }
    }
    {
      std::ofstream ev(dir / "events.log", std::ios::trunc);
      for (const auto& s : out.series) {
        for (const auto& l : s.events.lines()) ev << l << " series=" << s.name << '\n';
      }
    }
    {
      RunConfig c = config;
      c.seeds = {options.seed};
      std::ofstream cfg(dir / "config.cfg", std::ios::trunc);
      cfg << to_text(c);
    }
    save_checkpoint(dir / "base.ftrc", out.base);
  }
  return out;
}

}  // namespace forgetrace
