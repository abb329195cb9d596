// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "forgetrace/corpus.hpp"
#include "forgetrace/memory.hpp"
#include "forgetrace/model.hpp"
#include "forgetrace/random.hpp"

namespace {

using namespace forgetrace;

ModelConfig desk_model() {
  ModelConfig c;
  c.total_steps = 1000;
  c.init_seed = 1;
  return c;
}

Batch random_batch(std::size_t rows, std::size_t len, int vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenSeq> seqs(rows);
  for (auto& s : seqs) {
    for (std::size_t t = 0; t < len; ++t) s.push_back(static_cast<TokenId>(3 + rng.below(vocab - 3)));
  }
  return rows_batch(seqs);
}

void BM_TrainStep(benchmark::State& st) {
  ModelState state = init_model(desk_model());
  const Batch batch = random_batch(static_cast<std::size_t>(st.range(0)), 128, 2048, 7);
  for (auto _ : st) benchmark::DoNotOptimize(train_step(state, batch, 1e-4).mean_loss);
  st.SetItemsProcessed(st.iterations() * st.range(0) * 128);
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_GreedyDecode32(benchmark::State& st) {
  const ModelState state = init_model(desk_model());
  TokenSeq prefix(32);
  for (std::size_t i = 0; i < prefix.size(); ++i) prefix[i] = static_cast<TokenId>(3 + i);
  for (auto _ : st) benchmark::DoNotOptimize(greedy_decode(state, prefix, 32));
}
BENCHMARK(BM_GreedyDecode32)->Unit(benchmark::kMicrosecond);

void BM_Bm25Scores(benchmark::State& st) {
  Bm25Index index;
  Rng rng(3);
  for (std::int64_t id = 0; id < st.range(0); ++id) {
    TokenSeq doc(60);
    for (auto& t : doc) t = static_cast<TokenId>(rng.below(1500));
    index.add(id, doc);
  }
  TokenSeq query(60);
  for (auto& t : query) t = static_cast<TokenId>(rng.below(1500));
  for (auto _ : st) benchmark::DoNotOptimize(index.scores(query));
}
BENCHMARK(BM_Bm25Scores)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
