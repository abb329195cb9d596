// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "forgetrace/error.hpp"
#include "forgetrace/model.hpp"
#include "forgetrace/random.hpp"
#include "rigs.hpp"

namespace forgetrace {
namespace {

using testing::micro_config;

// Straight-line forward pass written from the architecture description with
// plain loops. Shares nothing with the Eigen implementation but the layout.
std::vector<std::vector<double>> reference_forward(const ModelState& s, const TokenSeq& toks) {
  const auto& c = s.config;
  const std::size_t n = toks.size();
  const std::size_t d = static_cast<std::size_t>(c.d_model);
  const std::size_t H = static_cast<std::size_t>(c.n_heads);
  const std::size_t hd = d / H;
  const std::size_t f = static_cast<std::size_t>(c.d_ffn);
  const std::size_t V = static_cast<std::size_t>(c.vocab_size);
  auto P = [&](const std::string& name) { return s.param(name); };

  using Rows = std::vector<std::vector<double>>;
  auto norm = [&](const Rows& x, const std::string& g, const std::string& b) {
    Rows y(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i) {
      double mu = 0;
      for (double v : x[i]) mu += v;
      mu /= static_cast<double>(d);
      double var = 0;
      for (double v : x[i]) var += (v - mu) * (v - mu);
      var /= static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) {
        y[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-5) * P(g)[j] + P(b)[j];
      }
    }
    return y;
  };
  auto affine = [&](const Rows& x, const std::string& w, const std::string& b, std::size_t in,
                    std::size_t out) {
    Rows y(n, std::vector<double>(out));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < out; ++o) {
        double acc = P(b)[o];
        for (std::size_t k = 0; k < in; ++k) acc += x[i][k] * P(w)[k * out + o];
        y[i][o] = acc;
      }
    }
    return y;
  };

  Rows x(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      x[i][j] = P("tok_emb")[static_cast<std::size_t>(toks[i]) * d + j] + P("pos_emb")[i * d + j];
    }
  }
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    const Rows qkv = affine(norm(x, p + "ln1.g", p + "ln1.b"), p + "attn.wqkv", p + "attn.bqkv",
                            d, 3 * d);
    Rows att(n, std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> w(i + 1);
        for (std::size_t j = 0; j <= i; ++j) {
          double dot = 0;
          for (std::size_t k = 0; k < hd; ++k) dot += qkv[i][h * hd + k] * qkv[j][d + h * hd + k];
          w[j] = dot / std::sqrt(static_cast<double>(hd));
        }
        const double mx = *std::max_element(w.begin(), w.end());
        double z = 0;
        for (double& v : w) z += (v = std::exp(v - mx));
        for (std::size_t j = 0; j <= i; ++j) {
          for (std::size_t k = 0; k < hd; ++k) {
            att[i][h * hd + k] += w[j] / z * qkv[j][2 * d + h * hd + k];
          }
        }
      }
    }
    const Rows proj = affine(att, p + "attn.wo", p + "attn.bo", d, d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) x[i][j] += proj[i][j];
    }
    Rows u = affine(norm(x, p + "ln2.g", p + "ln2.b"), p + "mlp.w1", p + "mlp.b1", d, f);
    for (auto& row : u) {
      for (double& v : row) {
        v = 0.5 * v * (1 + std::tanh(std::sqrt(2 / std::numbers::pi) * (v + 0.044715 * v * v * v)));
      }
    }
    const Rows m = affine(u, p + "mlp.w2", p + "mlp.b2", f, d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) x[i][j] += m[i][j];
    }
  }
  return affine(norm(x, "lnf.g", "lnf.b"), "head.w", "head.b", d, V);
}

ModelState scrambled_model(const ModelConfig& c, std::uint64_t seed) {
  ModelState s = init_model(c);
  Rng rng(seed);
  for (double& w : s.weights) w = 0.5 * rng.normal();
  return s;
}

Batch one_row(const TokenSeq& toks) {
  Batch b;
  b.rows = 1;
  b.cols = toks.size();
  b.tokens = toks;
  b.mask.assign(toks.size(), 1);
  b.mask.back() = 0;
  return b;
}

TEST(ModelInit, SameSeedSameChecksum) {
  const ModelConfig c = micro_config();
  EXPECT_EQ(init_model(c).checksum(), init_model(c).checksum());
  ModelConfig other = c;
  other.init_seed = 8;
  EXPECT_NE(init_model(c).checksum(), init_model(other).checksum());
}

TEST(ModelInit, HeadsMustDivideWidth) {
  ModelConfig c;
  c.d_model = 64;
  c.n_heads = 3;
  try {
    init_model(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("d_model not divisible by n_heads"), std::string::npos);
  }
}

TEST(ModelInit, DeskParameterCountMatchesFormula) {
  const ModelConfig c;  // L=2, d=64, heads=2, ffn=256, V=2048, ctx=128
  const std::size_t L = 2, d = 64, f = 256, V = 2048, ctx = 128;
  const std::size_t per_layer = 2 * d            // ln1
                                + d * 3 * d + 3 * d  // qkv
                                + d * d + d          // out proj
                                + 2 * d              // ln2
                                + d * f + f          // mlp in
                                + f * d + d;         // mlp out
  const std::size_t expected = V * d + ctx * d + L * per_layer + 2 * d + d * V + V;
  EXPECT_EQ(c.parameter_count(), expected);
  EXPECT_EQ(expected, 372480u);
  EXPECT_EQ(init_model(c).weights.size(), expected);
}

TEST(ModelInit, ContextMustHoldTwoWindows) {
  ModelConfig c = micro_config();
  c.context_len = 63;
  const auto v = c.violations();
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], "context_len must be ≥ 64");
}

TEST(Forward, MatchesStraightLineReference) {
  const ModelState s = scrambled_model(micro_config(4, 8, 2, 2, 12), 11);
  const TokenSeq toks = {0, 3, 1, 2, 2, 3, 1, 0, 1};
  const Logits got = forward(s, toks);
  const auto want = reference_forward(s, toks);
  ASSERT_EQ(got.rows, toks.size());
  for (std::size_t t = 0; t < toks.size(); ++t) {
    for (std::size_t v = 0; v < 4; ++v) EXPECT_NEAR(got.row(t)[v], want[t][v], 1e-12);
  }
}

TEST(Forward, LaterTokensDoNotLeakBackwards) {
  const ModelState s = scrambled_model(micro_config(), 3);
  TokenSeq toks(20);
  for (std::size_t i = 0; i < toks.size(); ++i) toks[i] = static_cast<TokenId>(i % 16);
  const Logits base = forward(s, toks);
  for (std::size_t t = 0; t + 1 < toks.size(); ++t) {
    TokenSeq changed = toks;
    changed[t + 1] = (changed[t + 1] + 5) % 16;
    const Logits other = forward(s, changed);
    for (std::size_t r = 0; r <= t; ++r) {
      for (std::size_t v = 0; v < 16; ++v) ASSERT_EQ(base.row(r)[v], other.row(r)[v]);
    }
  }
}

TEST(Forward, SoftmaxRowsSumToOne) {
  const ModelState s = scrambled_model(micro_config(), 5);
  const TokenSeq toks = {1, 4, 9, 9, 2, 15};
  const Logits lg = forward(s, toks);
  for (std::size_t t = 0; t < lg.rows; ++t) {
    const auto row = lg.row(t);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0;
    for (double v : row) z += std::exp(v - mx);
    double sum = 0;
    for (double v : row) sum += std::exp(v - mx) / z;
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Forward, OverlongInputIsRejected) {
  const ModelState s = init_model(micro_config());
  const TokenSeq toks(65, 1);
  EXPECT_THROW(forward(s, toks), ConfigError);
}

TEST(Forward, IncrementalSessionMatchesFullPass) {
  const ModelState s = scrambled_model(micro_config(), 9);
  const TokenSeq toks = {3, 1, 4, 1, 5, 9, 2, 6, 5, 3};
  const Logits full = forward(s, toks);
  InferenceSession session(s);
  std::size_t row = 0;
  for (std::size_t cut : {3u, 1u, 6u}) {
    const Logits part = session.append(std::span(toks).subspan(row, cut));
    for (std::size_t r = 0; r < cut; ++r) {
      for (std::size_t v = 0; v < 16; ++v) EXPECT_NEAR(part.row(r)[v], full.row(row + r)[v], 1e-12);
    }
    row += cut;
  }
}

TEST(LearningRate, WarmupThenCosine) {
  ModelConfig c = micro_config();
  c.max_lr = 1e-3;
  c.warmup_steps = 10;
  c.total_steps = 110;
  EXPECT_EQ(lr_at(0, c), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(10, c), 1e-3);
  EXPECT_NEAR(lr_at(60, c), (1e-3 + 1e-4) / 2, 1e-12);
  EXPECT_NEAR(lr_at(110, c), 1e-4, 1e-9);
  EXPECT_NEAR(lr_at(500, c), 1e-4, 1e-9);
  for (std::int64_t s = 1; s <= 10; ++s) EXPECT_GE(lr_at(s, c), lr_at(s - 1, c));
  for (std::int64_t s = 11; s <= 110; ++s) EXPECT_LE(lr_at(s, c), lr_at(s - 1, c));
}

TEST(GreedyDecode, ConstantWinner) {
  const TokenId three[] = {3};
  const ModelState s = testing::constant_model(8, three);
  const TokenSeq prefix = {1, 4, 5};
  EXPECT_EQ(greedy_decode(s, prefix, 10), TokenSeq(10, 3));
}

TEST(GreedyDecode, TiesGoToTheLowestId) {
  const TokenId tied[] = {5, 2};
  const ModelState s = testing::constant_model(8, tied);
  const TokenSeq prefix = {7};
  EXPECT_EQ(greedy_decode(s, prefix, 4), TokenSeq(4, 2));
  const double row[] = {0.5, 1.0, 1.0, -2.0};
  EXPECT_EQ(argmax(row), 1u);
}

TEST(GreedyDecode, MatchesFullRecomputeOracle) {
  const ModelState s = scrambled_model(micro_config(), 21);
  TokenSeq seq = {2, 7, 7, 1};
  const TokenSeq got = greedy_decode(s, seq, 12);
  for (std::size_t i = 0; i < 12; ++i) {
    const Logits lg = forward(s, seq);
    const auto next = static_cast<TokenId>(argmax(lg.row(lg.rows - 1)));
    EXPECT_EQ(got[i], next);
    seq.push_back(next);
  }
}

TEST(GreedyDecode, Errors) {
  const ModelState s = init_model(micro_config());
  EXPECT_THROW(greedy_decode(s, TokenSeq{}, 4), ConfigError);
  EXPECT_THROW(greedy_decode(s, TokenSeq(40, 1), 32), ConfigError);
}

TEST(TokenLogprobs, UniformModel) {
  const ModelState s = testing::uniform_model(8);
  const TokenSeq toks = {1, 4, 6, 3, 3};
  const auto lp = token_logprobs(s, toks);
  ASSERT_EQ(lp.size(), 4u);
  for (double v : lp) EXPECT_NEAR(v, -std::log(8.0), 1e-12);
}

TEST(TokenLogprobs, SumIsSequenceLogProbability) {
  const ModelState s = scrambled_model(micro_config(), 4);
  const TokenSeq toks = {1, 9, 3, 3, 12, 0};
  const auto lp = token_logprobs(s, toks);
  const Logits lg = forward(s, toks);
  double chain = 0;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    const auto row = lg.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0;
    for (double v : row) z += std::exp(v - mx);
    const double want = row[static_cast<std::size_t>(toks[i + 1])] - mx - std::log(z);
    EXPECT_NEAR(lp[i], want, 1e-12);
    EXPECT_LE(lp[i], 0.0);
    chain += want;
  }
  EXPECT_NEAR(std::accumulate(lp.begin(), lp.end(), 0.0), chain, 1e-10);
}

TEST(TokenLogprobs, SingleTokenHasNothingToPredict) {
  const ModelState s = init_model(micro_config());
  try {
    token_logprobs(s, TokenSeq{3});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "nothing to predict");
  }
}

TEST(Gradient, FiniteDifferencesAgree) {
  const TokenSeq toks = {1, 5, 9, 2, 2, 14, 7, 3, 11, 0, 6, 6};
  const auto r = gradient_check(micro_config(), one_row(toks));
  EXPECT_GE(r.checked, 200u);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Gradient, CorruptedGradientIsCaught) {
  const TokenSeq toks = {1, 5, 9, 2, 2, 14, 7, 3, 11, 0, 6, 6};
  GradientCheckOptions opt;
  opt.corrupt = [](std::span<double> g) {
    for (double& v : g) v *= 1.1;
  };
  EXPECT_GT(gradient_check(micro_config(), one_row(toks), opt).max_rel_error, 1e-2);
}

TEST(Gradient, NoSupervisedPositionsMeansZeroGradient) {
  Batch b = one_row({1, 2, 3, 4});
  std::fill(b.mask.begin(), b.mask.end(), 0);
  const auto lg = loss_and_gradient(init_model(micro_config()), b);
  EXPECT_EQ(lg.mean_loss, 0.0);
  for (double g : lg.gradient) ASSERT_EQ(g, 0.0);
}

TEST(TrainStep, DeterministicAndCounted) {
  const Batch b = one_row({1, 5, 9, 2, 2, 14, 7, 3});
  ModelState a = init_model(micro_config());
  ModelState c = init_model(micro_config());
  const auto ra = train_step(a, b);
  const auto rc = train_step(c, b);
  EXPECT_EQ(ra.mean_loss, rc.mean_loss);
  EXPECT_EQ(a.checksum(), c.checksum());
  EXPECT_EQ(a.step, 1);
  EXPECT_TRUE(a.all_finite());
}

TEST(TrainStep, DivergenceLeavesStateUntouched) {
  ModelState s = init_model(micro_config());
  s.param("head.b")[0] = std::numeric_limits<double>::quiet_NaN();
  const std::uint64_t before = s.checksum();
  EXPECT_THROW(train_step(s, one_row({1, 2, 3})), DivergenceError);
  EXPECT_EQ(s.checksum(), before);
  EXPECT_EQ(s.step, 0);
}

TEST(TrainStep, OverfitsOneBatch) {
  ModelConfig c;  // desk shape
  c.vocab_size = 256;
  c.max_lr = 3e-3;
  c.warmup_steps = 0;
  c.total_steps = 200;
  c.init_seed = 1;
  ModelState s = init_model(c);
  Batch b;
  b.rows = 2;
  b.cols = 32;
  Rng rng(5);
  for (std::size_t i = 0; i < b.rows * b.cols; ++i) {
    b.tokens.push_back(static_cast<TokenId>(3 + rng.below(253)));
    b.mask.push_back((i + 1) % b.cols != 0);
  }
  const double first = train_step(s, b).mean_loss;
  for (int i = 1; i < 200; ++i) train_step(s, b);
  EXPECT_LT(batch_loss(s, b), 0.1 * first);
}

}  // namespace
}  // namespace forgetrace
