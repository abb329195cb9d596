// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "forgetrace/error.hpp"
#include "forgetrace/metrics.hpp"
#include "forgetrace/random.hpp"
#include "rigs.hpp"

namespace forgetrace {
namespace {

using testing::position_model;
using testing::script_for;

// Worked examples of the two generation metrics. Punctuation is dropped
// because the tokenizer splits on whitespace only.
constexpr std::string_view kEarthTarget = "known as the earth's lungs";
constexpr std::string_view kEarthDecoded = "known as the moon's lungs";
constexpr std::string_view kRomeTarget =
    "is an iconic symbol of the roman empire's architectural prowess";
constexpr std::string_view kRomeDecoded =
    "is an iconic symbol of the russian federation's scientific prowess";
constexpr std::string_view kLeonardo = "leonardo da vinci";
constexpr std::string_view kLeonardoDecoded = "a man called leonardo da vinci is renowned for";
constexpr std::string_view kTrumpDecoded = "donald trump is renowned for its elusive";

class Fixtures : public ::testing::Test {
 protected:
  Vocab vocab{testing::words_in({kEarthTarget, kEarthDecoded, kRomeTarget, kRomeDecoded,
                                 kLeonardoDecoded, kTrumpDecoded})};
  int V = static_cast<int>(vocab.size());

  TokenSeq ids(std::string_view text) const { return tokenize(text, vocab); }

  EvalItem item(EvalMode mode, std::string_view target, std::string_view entity = {},
                std::size_t prefix_len = 32) const {
    EvalItem it;
    it.mode = mode;
    it.prefix.assign(prefix_len, vocab.id("the"));
    it.target = ids(target);
    it.entity_tokens = ids(entity);
    return it;
  }

  ModelState decoding(std::string_view decoded, std::size_t prefix_len = 32) const {
    const TokenSeq out = ids(decoded);
    return position_model(V, script_for(prefix_len, out));
  }
};

TEST_F(Fixtures, PositionRigDecodesTheScript) {
  const ModelState s = decoding(kEarthDecoded);
  const TokenSeq prefix(32, vocab.id("the"));
  EXPECT_EQ(greedy_decode(s, prefix, 5), ids(kEarthDecoded));
}

TEST_F(Fixtures, MInOneWrongOfFive) {
  const EvalItem it = item(EvalMode::inclusive, kEarthTarget);
  const EvalItem items[] = {it};
  EXPECT_NEAR(m_in(decoding(kEarthDecoded), items), 0.8, 1e-12);
}

TEST_F(Fixtures, MInThreeWrongOfTen) {
  const EvalItem it = item(EvalMode::inclusive, kRomeTarget);
  ASSERT_EQ(it.target.size(), 10u);
  const EvalItem items[] = {it};
  EXPECT_NEAR(m_in(decoding(kRomeDecoded), items), 0.7, 1e-12);
}

TEST_F(Fixtures, MInPerfectDecode) {
  const EvalItem items[] = {item(EvalMode::inclusive, kRomeTarget)};
  EXPECT_EQ(m_in(decoding(kRomeTarget), items), 1.0);
}

TEST_F(Fixtures, MExEntityAtAnOffset) {
  const EvalItem items[] = {item(EvalMode::exclusive, kLeonardoDecoded, kLeonardo)};
  EXPECT_EQ(m_ex(decoding(kLeonardoDecoded), items), 1.0);
}

TEST_F(Fixtures, MExWrongEntity) {
  const EvalItem items[] = {item(EvalMode::exclusive, kTrumpDecoded, kLeonardo)};
  EXPECT_EQ(m_ex(decoding(kTrumpDecoded), items), 0.0);
}

TEST_F(Fixtures, MExWholeDecodeIsEntity) {
  const EvalItem items[] = {item(EvalMode::exclusive, kLeonardo, kLeonardo)};
  EXPECT_EQ(m_ex(decoding(kLeonardo), items), 1.0);
}

TEST_F(Fixtures, ModeMismatch) {
  const EvalItem items[] = {item(EvalMode::exclusive, kLeonardo, kLeonardo)};
  try {
    m_in(decoding(kLeonardo), items);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "mode mismatch");
  }
}

TEST(Mf, TwoOfThreeContexts) {
  // Row p predicts script[p]; contexts of lengths 1, 2, 3 read rows 0, 1, 2.
  const TokenId script[] = {4, 5, 6};
  const ModelState s = position_model(8, script);
  const MfContext ctx[] = {{{3}, 4, {}}, {{3, 3}, 7, {}}, {{3, 3, 3}, 6, {}}};
  EXPECT_NEAR(mf(s, ctx), 2.0 / 3.0, 1e-15);
  const MfContext all_right[] = {ctx[0], ctx[2]};
  EXPECT_EQ(mf(s, all_right), 1.0);
  const MfContext one[] = {ctx[1]};
  EXPECT_EQ(mf(s, one), 0.0);
  EXPECT_THROW(mf(s, std::span<const MfContext>{}), ConfigError);
}

TEST(Ppl, UniformModelOverEight) {
  const ModelState s = testing::uniform_model(8);
  std::vector<Document> docs(2);
  docs[0].tokens = {3, 4, 5, 6, 7, 3};
  docs[1].tokens = {7, 7};
  EXPECT_NEAR(ppl(s, docs), 8.0, 1e-6);
  EXPECT_THROW(ppl(s, std::span<const Document>{}), ConfigError);
}

TEST(Ppl, TokenWeightedAcrossDocuments) {
  ModelConfig c = testing::micro_config();
  ModelState s = init_model(c);
  Rng rng(2);
  for (double& w : s.weights) w = 0.3 * rng.normal();
  std::vector<Document> docs(2);
  docs[0].tokens = {1, 5, 9, 2, 2, 14, 7};
  docs[1].tokens = {3, 3, 12};
  double sum = 0;
  std::size_t n = 0;
  for (const auto& d : docs) {
    const Logits lg = forward(s, d.tokens);
    for (std::size_t i = 0; i + 1 < d.tokens.size(); ++i) {
      const auto row = lg.row(i);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0;
      for (double v : row) z += std::exp(v - mx);
      sum += row[static_cast<std::size_t>(d.tokens[i + 1])] - mx - std::log(z);
      ++n;
    }
  }
  EXPECT_NEAR(ppl(s, docs), std::exp(-sum / static_cast<double>(n)), 1e-9);
  EXPECT_GE(ppl(s, docs), 1.0);
}

TEST(Ppl, MemorizedDocumentApproachesOne) {
  // Row p predicts the document's own next token with a huge margin.
  const TokenSeq doc = {3, 4, 5, 6, 7};
  const TokenSeq script(doc.begin() + 1, doc.end());
  ModelState s = position_model(8, script);
  for (double& w : s.param("head.w")) w *= 50.0;
  std::vector<Document> docs(1);
  docs[0].tokens = doc;
  EXPECT_LT(ppl(s, docs), 1.0 + 1e-6);
}

TEST(Substring, MatchesQuadraticScan) {
  Rng rng(8);
  for (int trial = 0; trial < 2000; ++trial) {
    TokenSeq hay(rng.below(12)), needle(1 + rng.below(3));
    for (auto& t : hay) t = static_cast<TokenId>(rng.below(3));
    for (auto& t : needle) t = static_cast<TokenId>(rng.below(3));
    bool brute = false;
    for (std::size_t i = 0; i + needle.size() <= hay.size() && !brute; ++i) {
      bool all = true;
      for (std::size_t j = 0; j < needle.size(); ++j) all = all && hay[i + j] == needle[j];
      brute = all;
    }
    ASSERT_EQ(is_substring(needle, hay), brute);
  }
}

// An A document with the entity between 40 filler tokens on each side.
Document planted(std::int64_t id, std::int64_t entity, TokenId e0, TokenId e1) {
  Document d;
  d.doc_id = id;
  for (int i = 0; i < 40; ++i) d.tokens.push_back(static_cast<TokenId>(3 + i % 5));
  d.tokens.push_back(e0);
  d.tokens.push_back(e1);
  for (int i = 0; i < 40; ++i) d.tokens.push_back(static_cast<TokenId>(3 + i % 7));
  d.entities.push_back({entity, 40, 42, EntityType::PER});
  return d;
}

Document mention(std::int64_t id, std::int64_t entity) {
  Document d;
  d.doc_id = id;
  d.source = Source::B;
  d.tokens = {3, 4, 20, 21};
  d.entities.push_back({entity, 2, 4, EntityType::MISC});
  return d;
}

EntityDictionary six_entities() {
  EntityDictionary dict;
  for (std::int64_t e = 0; e < 6; ++e) {
    dict.add(e, {"e" + std::to_string(e), {static_cast<TokenId>(20 + 2 * e),
                                           static_cast<TokenId>(21 + 2 * e)},
                 EntityType::PER});
  }
  return dict;
}

TEST(EvalSet, MedianSplitOnPlantedCounts) {
  // A counts: e0 5, e1 4, e2 3, e3 1, e4 1, e5 0 -> median 2, top half {e0,e1,e2}.
  // B counts: e0 0, e1 3, e2 1, e3 0, e4 2, e5 4 -> median 1.5, bottom half {e0,e2,e3}.
  const EntityDictionary dict = six_entities();
  const int a_counts[] = {5, 4, 3, 1, 1, 0};
  const int b_counts[] = {0, 3, 1, 0, 2, 4};
  std::vector<Document> a, b;
  std::int64_t id = 0;
  for (std::int64_t e = 0; e < 6; ++e) {
    const auto& toks = dict.at(e).tokens;
    for (int k = 0; k < a_counts[e]; ++k) a.push_back(planted(id++, e, toks[0], toks[1]));
    for (int k = 0; k < b_counts[e]; ++k) b.push_back(mention(id++, e));
  }
  const auto items = build_entity_evalset(a, b, dict);
  std::set<std::int64_t> chosen;
  for (const auto& it : items) chosen.insert(it.entity_id);
  EXPECT_EQ(chosen, (std::set<std::int64_t>{0, 2}));
  EXPECT_EQ(items.size(), 2u * (5 + 3));

  for (std::size_t i = 0; i < items.size(); i += 2) {
    const EvalItem& in = items[i];
    const EvalItem& ex = items[i + 1];
    EXPECT_EQ(in.mode, EvalMode::inclusive);
    EXPECT_EQ(ex.mode, EvalMode::exclusive);
    EXPECT_EQ(in.pair_id(), ex.pair_id());
    EXPECT_EQ(in.prefix.size(), kEvalWindow);
    EXPECT_EQ(in.target.size(), kEvalWindow);
    EXPECT_EQ(ex.prefix.size(), kEvalWindow);
    EXPECT_EQ(ex.target.size(), kEvalWindow);
    EXPECT_TRUE(std::equal(in.entity_tokens.rbegin(), in.entity_tokens.rend(), in.prefix.rbegin()));
    EXPECT_FALSE(is_substring(ex.entity_tokens, ex.prefix));
  }

  // Document order does not matter.
  std::reverse(a.begin(), a.end());
  std::reverse(b.begin(), b.end());
  std::set<std::int64_t> again;
  for (const auto& it : build_entity_evalset(a, b, dict)) again.insert(it.entity_id);
  EXPECT_EQ(again, chosen);
}

TEST(EvalSet, NoQualifyingEntity) {
  const EntityDictionary dict = six_entities();
  std::vector<Document> a, b = {mention(0, 1)};
  try {
    build_entity_evalset(a, b, dict);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "empty intersection");
  }
}

// Five exclusive/inclusive pairs whose entity is the single token 10 + i.
// The rig always emits 10, 11 and 12, so pairs 0..2 are hits.
std::vector<EvalItem> five_pairs() {
  std::vector<EvalItem> out;
  for (std::int64_t i = 0; i < 5; ++i) {
    for (const EvalMode mode : {EvalMode::inclusive, EvalMode::exclusive}) {
      EvalItem it;
      it.item_id = static_cast<std::int64_t>(out.size());
      it.entity_id = i;
      it.mode = mode;
      it.prefix.assign(kEvalWindow, 3);
      it.target.assign(kEvalWindow, 4);
      it.entity_tokens = {static_cast<TokenId>(10 + i)};
      out.push_back(it);
    }
  }
  return out;
}

TEST(FilterMemorized, KeepsExactlyTheHits) {
  TokenSeq decoded(kEvalWindow, 5);
  decoded[3] = 10;
  decoded[9] = 11;
  decoded[20] = 12;
  const ModelState s = position_model(16, script_for(kEvalWindow, decoded));
  const auto kept = filter_memorized(s, five_pairs());
  ASSERT_EQ(kept.size(), 6u);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    EXPECT_EQ(kept[i].entity_id, static_cast<std::int64_t>(i / 2));
  }
  const auto none = filter_memorized(testing::uniform_model(16), five_pairs());
  EXPECT_TRUE(none.empty());
}

TEST(FilterMemorized, MetricsIgnoreItemOrder) {
  TokenSeq decoded(kEvalWindow, 5);
  decoded[0] = 10;
  decoded[1] = 13;
  const ModelState s = position_model(16, script_for(kEvalWindow, decoded));
  auto ex = select_mode(five_pairs(), EvalMode::exclusive);
  const double base = m_ex(s, ex);
  EXPECT_DOUBLE_EQ(base, 0.4);
  std::reverse(ex.begin(), ex.end());
  EXPECT_EQ(m_ex(s, ex), base);
}

TEST(Buckets, CleanSplit) {
  const std::map<std::int64_t, double> acc = {{1, 0.9}, {2, 0.1}, {3, 0.8}, {4, 0.2}};
  const auto b = bucket_by_difficulty(acc, 2);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0].entity_ids, (std::vector<std::int64_t>{2, 4}));
  EXPECT_EQ(b[1].entity_ids, (std::vector<std::int64_t>{3, 1}));
  EXPECT_NEAR(b[0].mean_accuracy, 0.15, 1e-12);
  EXPECT_NEAR(b[1].mean_accuracy, 0.85, 1e-12);
}

TEST(Buckets, SevenIntoThree) {
  std::map<std::int64_t, double> acc;
  const double values[] = {0.5, 0.0, 1.0, 0.25, 0.75, 0.0, 1.0};
  for (std::int64_t i = 0; i < 7; ++i) acc[i] = values[i];
  const auto b = bucket_by_difficulty(acc, 3);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].entity_ids.size(), 3u);
  EXPECT_EQ(b[1].entity_ids.size(), 2u);
  EXPECT_EQ(b[2].entity_ids.size(), 2u);
  EXPECT_LE(b[0].mean_accuracy, b[1].mean_accuracy);
  EXPECT_LE(b[1].mean_accuracy, b[2].mean_accuracy);
  std::set<std::int64_t> all;
  for (const auto& bucket : b) all.insert(bucket.entity_ids.begin(), bucket.entity_ids.end());
  EXPECT_EQ(all.size(), 7u);
  EXPECT_THROW(bucket_by_difficulty(acc, 8), ConfigError);
}

TEST(Buckets, EqualAccuracies) {
  const std::map<std::int64_t, double> acc = {{1, 0.5}, {2, 0.5}, {3, 0.5}, {4, 0.5}};
  const auto b = bucket_by_difficulty(acc, 2);
  EXPECT_EQ(b[0].entity_ids.size(), 2u);
  EXPECT_EQ(b[0].mean_accuracy, b[1].mean_accuracy);
}

// Pairs of two entity types; the rig hits entity 10 (MISC) and 12 (PER).
TEST(PerType, WeightedMeanIdentityAndSubsets) {
  auto items = five_pairs();
  for (auto& it : items) it.type = it.entity_id < 2 ? EntityType::MISC : EntityType::PER;
  TokenSeq decoded(kEvalWindow, 4);
  decoded[5] = 10;
  decoded[6] = 12;
  const ModelState s = position_model(16, script_for(kEvalWindow, decoded));
  const MetricReport r = evaluate_items(s, items);
  ASSERT_EQ(r.per_type.size(), 2u);
  const auto& misc = r.per_type.at(EntityType::MISC);
  const auto& per = r.per_type.at(EntityType::PER);
  EXPECT_EQ(misc.n_items + per.n_items, r.n_items);
  EXPECT_NEAR(r.m_ex,
              (misc.m_ex * static_cast<double>(misc.n_items) +
               per.m_ex * static_cast<double>(per.n_items)) /
                  static_cast<double>(r.n_items),
              1e-12);
  EXPECT_DOUBLE_EQ(misc.m_ex, 0.5);
  EXPECT_NEAR(per.m_ex, 1.0 / 3.0, 1e-15);

  std::vector<EvalItem> only_per;
  for (const auto& it : items) {
    if (it.type == EntityType::PER) only_per.push_back(it);
  }
  const MetricReport sub = evaluate_items(s, only_per);
  EXPECT_EQ(sub.per_type.size(), 1u);
  EXPECT_EQ(sub.m_ex, per.m_ex);
  EXPECT_EQ(sub.m_in, per.m_in);
  EXPECT_EQ(sub.mf, per.mf);
  EXPECT_EQ(sub.ppl, per.ppl);
  EXPECT_EQ(sub.per_type.at(EntityType::PER).m_ex, sub.m_ex);
}

TEST(PerType, RangesHold) {
  const auto items = five_pairs();
  const MetricReport r = evaluate_items(testing::uniform_model(16), items);
  EXPECT_GE(r.ppl, 1.0);
  for (double v : {r.mf, r.m_in, r.m_ex}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(MetricsCsv, RoundTrip) {
  MetricReport r;
  r.step = 40;
  r.tokens_seen = 12345;
  r.ppl = 8.123456789012;
  r.mf = 0.25;
  r.m_in = 0.5;
  r.m_ex = 1.0 / 3.0;
  r.n_items = 6;
  r.per_type[EntityType::PER] = {7.5, 0.5, 0.25, 0.125, 6};
  r.phase = "train";
  r.seed = 2;
  const auto path = std::filesystem::temp_directory_path() / "forgetrace_metrics_test.csv";
  {
    std::ofstream out(path);
    out << metrics_csv_header() << "\n" << metrics_csv_row(r) << "\n";
  }
  EXPECT_EQ(metrics_csv_header().rfind("step,tokens_seen,ppl,mf,m_in,m_ex,n_items", 0), 0u);
  const auto back = read_metrics_csv(path);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].step, 40);
  EXPECT_EQ(back[0].tokens_seen, 12345);
  EXPECT_EQ(format_real(back[0].ppl), format_real(r.ppl));
  EXPECT_EQ(format_real(back[0].m_ex), "0.3333333333");
  EXPECT_EQ(back[0].phase, "train");
  EXPECT_EQ(back[0].seed, 2);
  EXPECT_EQ(back[0].per_type.at(EntityType::PER).m_in, 0.25);
  std::filesystem::remove(path);
}

TEST(EvalSetJsonl, RoundTrip) {
  const auto items = five_pairs();
  const auto path = std::filesystem::temp_directory_path() / "forgetrace_evalset_test.jsonl";
  write_evalset_jsonl(path, items);
  const auto back = read_evalset_jsonl(path);
  ASSERT_EQ(back.size(), items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_EQ(back[i].item_id, items[i].item_id);
    EXPECT_EQ(back[i].mode, items[i].mode);
    EXPECT_EQ(back[i].prefix, items[i].prefix);
    EXPECT_EQ(back[i].target, items[i].target);
    EXPECT_EQ(back[i].entity_tokens, items[i].entity_tokens);
  }
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace forgetrace
