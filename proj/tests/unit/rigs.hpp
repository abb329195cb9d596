// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

// Hand-set models whose argmax behaviour is known in closed form.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "forgetrace/model.hpp"
#include "forgetrace/types.hpp"

namespace forgetrace::testing {

inline ModelConfig micro_config(int vocab = 16, int d_model = 8, int n_heads = 2, int n_layers = 2,
                                int d_ffn = 16) {
  ModelConfig c;
  c.n_layers = n_layers;
  c.d_model = d_model;
  c.n_heads = n_heads;
  c.d_ffn = d_ffn;
  c.vocab_size = vocab;
  c.context_len = 64;
  c.max_lr = 1e-2;
  c.warmup_steps = 0;
  c.total_steps = 1000;
  c.init_seed = 7;
  return c;
}

// All weights zero except layer-norm gains: every logit is 0.
inline ModelState zero_model(const ModelConfig& config) {
  ModelState s = init_model(config);
  for (const auto& sec : s.layout) {
    auto p = s.param(sec.name);
    std::fill(p.begin(), p.end(), sec.name.ends_with(".g") ? 1.0 : 0.0);
  }
  return s;
}

inline ModelState uniform_model(int vocab) { return zero_model(micro_config(vocab)); }

// Logits are head.b everywhere, so these ids win at every position.
inline ModelState constant_model(int vocab, std::span<const TokenId> winners) {
  ModelState s = uniform_model(vocab);
  auto b = s.param("head.b");
  for (const TokenId id : winners) b[static_cast<std::size_t>(id)] = 1.0;
  return s;
}

// The token at position p is irrelevant: row p predicts script[p]. The
// residual stream at p is the one-hot e_p (blocks are zeroed), layer norm
// keeps coordinate p as the unique maximum, and head.w routes it to
// script[p]. Decoding after a prefix of length L emits script[L-1],
// script[L], ...
inline ModelState position_model(int vocab, std::span<const TokenId> script) {
  ModelConfig c = micro_config(vocab, /*d_model=*/64, /*n_heads=*/1, /*n_layers=*/1,
                               /*d_ffn=*/4);
  ModelState s = zero_model(c);
  auto pos = s.param("pos_emb");
  auto head = s.param("head.w");
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto v = static_cast<std::size_t>(vocab);
  for (std::size_t p = 0; p < script.size() && p < d; ++p) {
    pos[p * d + p] = 1.0;
    head[p * v + static_cast<std::size_t>(script[p])] = 1.0;
  }
  return s;
}

// A script that makes `decoded` the greedy continuation of any prefix of
// length prefix_len. Earlier positions predict `filler`.
inline std::vector<TokenId> script_for(std::size_t prefix_len, std::span<const TokenId> decoded,
                                       TokenId filler = 3) {
  std::vector<TokenId> script(prefix_len - 1, filler);
  script.insert(script.end(), decoded.begin(), decoded.end());
  return script;
}

// Vocabulary built from the words of `texts` in first-seen order, after the
// three specials.
inline std::vector<std::string> words_in(std::initializer_list<std::string_view> texts) {
  std::vector<std::string> out;
  for (const auto text : texts) {
    std::string word;
    auto flush = [&] {
      if (!word.empty() && std::find(out.begin(), out.end(), word) == out.end()) {
        out.push_back(word);
      }
      word.clear();
    };
    for (const char ch : text) {
      if (ch == ' ') {
        flush();
      } else {
        word.push_back(ch);
      }
    }
    flush();
  }
  return out;
}

}  // namespace forgetrace::testing
