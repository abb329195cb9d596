// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <regex>

#include "forgetrace/checkpoint.hpp"
#include "forgetrace/error.hpp"
#include "forgetrace/scheduler.hpp"
#include "forgetrace/synth.hpp"
#include "rigs.hpp"

namespace forgetrace {
namespace {

// 360 tiny synthetic documents; 45 per batch gives 8 base steps per epoch.
const RunData& tiny_data() {
  static const RunData data = [] {
    const SynthCorpus corpus = generate_synthetic(SynthConfig::tiny());
    RunData d;
    d.vocab = corpus.vocab;
    d.a = corpus.a;
    d.b = corpus.b;
    d.dict = EntityDictionary(corpus.entities, corpus.vocab);
    d.items = cap_pairs_per_entity(build_entity_evalset(d.a, d.b, d.dict), 1);
    return d;
  }();
  return data;
}

RunConfig micro_run(Strategy strategy) {
  RunConfig c;
  c.strategy = strategy;
  c.batch_size = 45;
  c.seq_len = 64;
  c.eval_every = 1000;
  c.replay_interval = 4;
  c.replay_epochs = strategy == Strategy::focused_stochastic ? 1 : 2;
  c.model = testing::micro_config(256, 16, 2, 1, 32);
  c.model.max_lr = 3e-3;
  return c;
}

RunOptions seeded(std::int64_t seed) {
  RunOptions o;
  o.seed = seed;
  return o;
}

TEST(Cost, TwoEpochsEveryFourSteps) {
  const RunConfig c = micro_run(Strategy::intensive_focused);
  const RunOutputs run = run_pretraining(c, tiny_data(), seeded(1));
  EXPECT_EQ(run.ledger.base_updates, 8);
  EXPECT_EQ(run.ledger.replay_events, 2);
  EXPECT_EQ(run.ledger.replay_updates, 4);
  EXPECT_EQ(run.ledger.ratio(), 1.5);
  EXPECT_EQ(cost_report(run.ledger, c), 1.5);
  EXPECT_EQ(ledger_csv(run.ledger),
            "base_updates,replay_updates,replay_events,tokens_seen,ratio\n8,4,2," +
                std::to_string(run.ledger.tokens_seen) + ",1.5\n");
}

TEST(Cost, VanillaIsExactlyOne) {
  const RunConfig c = micro_run(Strategy::vanilla);
  const RunOutputs run = run_pretraining(c, tiny_data(), seeded(1));
  EXPECT_EQ(run.ledger.replay_updates, 0);
  EXPECT_EQ(run.ledger.replay_events, 0);
  EXPECT_EQ(cost_report(run.ledger, c), 1.0);
}

TEST(Cost, ReportRejectsBadLedgers) {
  RunConfig c = micro_run(Strategy::intensive_focused);
  RunLedger empty;
  EXPECT_THROW(cost_report(empty, c), Error);
  RunLedger off{100, 40, 20, 0};  // 1.4 against an expected 1.5 ± 0.02
  EXPECT_THROW(cost_report(off, c), Error);
  RunLedger tail{102, 50, 25, 0};  // last interval cut short
  EXPECT_NO_THROW(cost_report(tail, c));
}

TEST(Ledger, UpdatesCountedByTheHookMatch) {
  const RunConfig c = micro_run(Strategy::focused_stochastic);
  std::int64_t calls = 0;
  RunOptions o = seeded(2);
  o.on_update = [&calls] { ++calls; };
  const RunOutputs run = run_pretraining(c, tiny_data(), o);
  EXPECT_EQ(calls, run.ledger.base_updates + run.ledger.replay_updates);
  EXPECT_EQ(run.ledger.replay_updates, run.ledger.replay_events * c.replay_epochs);
}

TEST(Ledger, ReplayEventsOnlyAtMultiplesOfT) {
  RunConfig c = micro_run(Strategy::bm25_all);
  c.replay_interval = 3;
  c.epochs = 2;
  const RunOutputs run = run_pretraining(c, tiny_data(), seeded(1));
  const std::regex line(R"(step=(\d+) event=(replay|replay_skipped)\b.*)");
  std::size_t events = 0;
  for (const auto& l : run.events.lines()) {
    std::smatch m;
    if (!std::regex_match(l, m, line)) continue;
    EXPECT_EQ(std::stoll(m[1]) % 3, 0) << l;
    ++events;
  }
  EXPECT_EQ(events, 16u / 3u);
}

TEST(Ledger, TokensSeenIgnoresReplay) {
  const RunOutputs vanilla = run_pretraining(micro_run(Strategy::vanilla), tiny_data(), seeded(3));
  const RunOutputs replay =
      run_pretraining(micro_run(Strategy::intensive_focused), tiny_data(), seeded(3));
  EXPECT_GT(replay.ledger.replay_updates, 0);
  EXPECT_EQ(vanilla.ledger.tokens_seen, replay.ledger.tokens_seen);
  ASSERT_EQ(vanilla.rows.size(), replay.rows.size());
  for (std::size_t i = 0; i < vanilla.rows.size(); ++i) {
    EXPECT_EQ(vanilla.rows[i].tokens_seen, replay.rows[i].tokens_seen);
  }
}

TEST(Ledger, ReplayThatNeverFiresIsVanilla) {
  RunConfig c = micro_run(Strategy::intensive_focused);
  c.replay_interval = 1000;
  const RunOutputs replay = run_pretraining(c, tiny_data(), seeded(4));
  const RunOutputs vanilla = run_pretraining(micro_run(Strategy::vanilla), tiny_data(), seeded(4));
  EXPECT_EQ(replay.state.checksum(), vanilla.state.checksum());
  EXPECT_EQ(metrics_csv_row(replay.rows.back()), metrics_csv_row(vanilla.rows.back()));
}

TEST(Exit, FocusedRunsRespectTheReplayCap) {
  RunConfig c = micro_run(Strategy::focused_stochastic);
  c.replay_interval = 1;
  c.epochs = 3;
  const RunOutputs run = run_pretraining(c, tiny_data(), seeded(1));
  ASSERT_TRUE(run.memory.has_value());
  EXPECT_LE(run.memory->max_replay_count(), 5);
  EXPECT_EQ(run.memory->max_replay_count(), 5);
}

TEST(Evaluation, PureAndStableAcrossCheckpoints) {
  const RunOutputs run = run_pretraining(micro_run(Strategy::vanilla), tiny_data(), seeded(5));
  const auto first = metrics_csv_row(evaluate_items(run.state, run.items));
  EXPECT_EQ(metrics_csv_row(evaluate_items(run.state, run.items)), first);
  const ModelState reloaded = deserialize_checkpoint(serialize_checkpoint(run.state));
  EXPECT_EQ(metrics_csv_row(evaluate_items(reloaded, run.items)), first);
  MetricReport mid = run.rows.back();
  MetricReport again = evaluate_items(reloaded, run.items);
  again.step = mid.step;
  again.tokens_seen = mid.tokens_seen;
  again.phase = mid.phase;
  again.seed = mid.seed;
  EXPECT_EQ(metrics_csv_row(again), metrics_csv_row(mid));
}

TEST(Cadence, SequentialRowsFollowTheBoundary) {
  RunConfig c = micro_run(Strategy::vanilla);
  c.corpus_mode = ComposeMode::sequential_AB;
  c.batch_size = 12;  // 10 A steps, then 20 B steps
  c.eval_every = 8;
  c.filter_memorized = false;
  const RunOutputs run = run_ab_transition(c, tiny_data(), seeded(1));
  EXPECT_EQ(run.boundary_step, 10);
  std::vector<std::pair<std::int64_t, std::string>> got;
  for (const auto& r : run.rows) got.emplace_back(r.step, r.phase);
  const std::vector<std::pair<std::int64_t, std::string>> want = {
      {10, "boundary"}, {18, "B"}, {26, "B"}, {30, "final"}};
  EXPECT_EQ(got, want);
  RunConfig mixed = c;
  mixed.corpus_mode = ComposeMode::mixed_shuffled;
  EXPECT_THROW(run_ab_transition(mixed, tiny_data(), seeded(1)), ConfigError);
}

TEST(Cadence, MixedRowsEveryInterval) {
  RunConfig c = micro_run(Strategy::vanilla);
  c.epochs = 2;  // 16 steps
  c.eval_every = 5;
  const RunOutputs run = run_pretraining(c, tiny_data(), seeded(1));
  std::vector<std::int64_t> steps;
  for (const auto& r : run.rows) steps.push_back(r.step);
  EXPECT_EQ(steps, (std::vector<std::int64_t>{5, 10, 15, 16}));
  EXPECT_EQ(run.rows.back().phase, "final");
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const ModelState s = run_pretraining(micro_run(Strategy::vanilla), tiny_data(), seeded(1)).state;
  const auto bytes = serialize_checkpoint(s);
  const ModelState back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.checksum(), s.checksum());
  EXPECT_EQ(back.weights, s.weights);
  EXPECT_EQ(back.adam_v, s.adam_v);
  EXPECT_EQ(back.step, s.step);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
}

TEST(Checkpoint, ResumedTrainingMatchesUninterrupted) {
  const ModelConfig c = testing::micro_config();
  Batch b;
  b.rows = 1;
  b.cols = 12;
  b.tokens = {1, 5, 9, 2, 2, 14, 7, 3, 11, 0, 6, 6};
  b.mask.assign(12, 1);
  b.mask.back() = 0;
  ModelState straight = init_model(c);
  for (int i = 0; i < 20; ++i) train_step(straight, b);
  ModelState half = init_model(c);
  for (int i = 0; i < 10; ++i) train_step(half, b);
  const auto path = std::filesystem::temp_directory_path() / "forgetrace_resume_test.ftrc";
  save_checkpoint(path, half);
  ModelState resumed = load_checkpoint(path);
  for (int i = 0; i < 10; ++i) train_step(resumed, b);
  EXPECT_EQ(resumed.checksum(), straight.checksum());
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFiles) {
  const auto bytes = serialize_checkpoint(init_model(testing::micro_config()));
  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + bytes.size() / 2);
  try {
    deserialize_checkpoint(cut);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_STREQ(e.what(), "unexpected end of checkpoint");
  }
  auto bad = bytes;
  bad[0] = 'X';
  try {
    deserialize_checkpoint(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  auto version = bytes;
  version[4] = 9;
  try {
    deserialize_checkpoint(version);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(UpperBound, StopsAtOnceWhenAlreadyPerfect) {
  // Every exclusive item's entity is decoded, so no epoch can improve.
  TokenSeq decoded(kEvalWindow, 5);
  decoded[4] = 9;
  const ModelState s = testing::position_model(16, testing::script_for(kEvalWindow, decoded));
  std::vector<EvalItem> items;
  for (const EvalMode mode : {EvalMode::inclusive, EvalMode::exclusive}) {
    EvalItem it;
    it.item_id = static_cast<std::int64_t>(items.size());
    it.mode = mode;
    it.prefix.assign(kEvalWindow, 3);
    it.target = decoded;
    it.entity_tokens = {9};
    items.push_back(it);
  }
  RunConfig c;
  const UpperBoundResult ub = run_upper_bound(s, items, c, 1);
  EXPECT_EQ(ub.epochs, 1);
  EXPECT_EQ(ub.m_ex_history.front(), 1.0);
  EXPECT_EQ(ub.state.checksum(), s.checksum());
  MetricReport untouched = evaluate_items(s, items);
  untouched.phase = "upper_bound";
  untouched.seed = 1;
  EXPECT_EQ(metrics_csv_row(ub.report), metrics_csv_row(untouched));
}

TEST(UpperBound, StoppingRuleAndBestState) {
  const RunOutputs run = run_pretraining(micro_run(Strategy::vanilla), tiny_data(), seeded(1));
  RunConfig c = micro_run(Strategy::upper_bound);
  c.upper_bound_max_epochs = 3;
  const UpperBoundResult ub = run_upper_bound(run.state, run.items, c, 1);
  ASSERT_EQ(ub.m_ex_history.size(), static_cast<std::size_t>(ub.epochs) + 1);
  EXPECT_LE(ub.epochs, 3);
  for (std::size_t i = 1; i + 1 < ub.m_ex_history.size(); ++i) {
    EXPECT_GT(ub.m_ex_history[i], ub.m_ex_history[i - 1]);
  }
  if (ub.epochs < 3) {
    EXPECT_LE(ub.m_ex_history.back(), ub.m_ex_history[ub.m_ex_history.size() - 2]);
  }
  const double best = *std::max_element(ub.m_ex_history.begin(), ub.m_ex_history.end());
  EXPECT_EQ(ub.report.m_ex, best);
  EXPECT_GE(ub.report.m_ex, ub.m_ex_history.front());
  EXPECT_THROW(run_upper_bound(std::filesystem::path("/nonexistent/x.ftrc"), run.items, c, 1),
               Error);
}

TEST(Curve, PeriodicSessionsAndControl) {
  RunConfig c = micro_run(Strategy::vanilla);
  c.curve_epochs = {0, 2};
  c.curve_buckets = 2;
  c.curve_steps = 7;
  c.curve_eval_every = 3;
  c.periodic_interval = 3;
  c.periodic_epochs = 1;
  const CurveOutputs out = run_forgetting_curve(c, tiny_data(), seeded(1));
  ASSERT_EQ(out.series.size(), 3u);
  EXPECT_EQ(out.base_steps, 8);
  const CurveSeries& control = out.series[0];
  EXPECT_EQ(control.name, "e0");
  MetricReport base_eval = evaluate_items(out.base, out.bucket_items);
  EXPECT_EQ(control.rows.front().m_ex, base_eval.m_ex);
  EXPECT_EQ(control.rows.front().ppl, base_eval.ppl);

  std::vector<std::int64_t> steps;
  for (const auto& r : control.rows) steps.push_back(r.step);
  EXPECT_EQ(steps, (std::vector<std::int64_t>{8, 11, 14, 15}));

  const CurveSeries& periodic = out.series[2];
  EXPECT_EQ(periodic.name, "periodic");
  EXPECT_EQ(periodic.intensive_epochs, 2);
  EXPECT_EQ(periodic.periodic_sessions, 7 / 3);
  EXPECT_EQ(periodic.events.count("periodic"), 2u);
  EXPECT_EQ(control.periodic_sessions, 0);

  // Buckets partition the entities with non-decreasing means.
  std::size_t n = 0;
  for (std::size_t i = 0; i < out.buckets.size(); ++i) {
    n += out.buckets[i].entity_ids.size();
    if (i > 0) {
      EXPECT_LE(out.buckets[i - 1].mean_accuracy, out.buckets[i].mean_accuracy);
    }
  }
  EXPECT_EQ(n, out.entity_accuracy.size());
}

TEST(Plan, SequentialPlanHoldsAThenB) {
  RunConfig c = micro_run(Strategy::vanilla);
  c.corpus_mode = ComposeMode::sequential_AB;
  c.batch_size = 12;
  c.a_epochs = 2;
  const TrainingPlan plan = make_plan(c, tiny_data(), 1);
  EXPECT_EQ(plan.boundary, 20u);
  EXPECT_EQ(plan.batches.size(), 40u);
  for (std::size_t i = 0; i < plan.batches.size(); ++i) {
    for (const Document* d : plan.batches[i]) {
      EXPECT_EQ(d->source, i < plan.boundary ? Source::A : Source::B);
    }
  }
}

}  // namespace
}  // namespace forgetrace
