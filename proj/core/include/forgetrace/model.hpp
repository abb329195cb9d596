// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "forgetrace/types.hpp"

namespace forgetrace {

// Storage handed to Eigen. Vectorized kernels peel a data-dependent number of
// leading elements, so a fixed base alignment keeps results bit-identical
// across allocations and processes.
template <class T>
struct CacheAlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  CacheAlignedAllocator() = default;
  template <class U>
  CacheAlignedAllocator(const CacheAlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const CacheAlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using AlignedDoubles = std::vector<double, CacheAlignedAllocator<double>>;

// Decoder-only transformer hyperparameters plus the optimizer and
// learning-rate schedule that drive it.
struct ModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 2;
  int d_ffn = 256;
  int vocab_size = 2048;
  int context_len = 128;

  double max_lr = 6e-4;
  double min_lr_ratio = 0.1;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1000;

  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
  double init_std = 0.02;
  std::uint64_t init_seed = 0;

  // Every violated constraint, in a fixed order. Empty when valid.
  std::vector<std::string> violations() const;
  // Throws ConfigError carrying all violations joined by "; ".
  void validate() const;

  std::size_t parameter_count() const;
};

// A named slice of the flat parameter store, row-major rows x cols.
struct ParamSection {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool decay = false;  // weight decay applies (matrices and embeddings)

  std::size_t size() const { return rows * cols; }
};

std::vector<ParamSection> parameter_layout(const ModelConfig& config);

struct ModelState {
  ModelConfig config;
  std::vector<ParamSection> layout;
  AlignedDoubles weights;
  AlignedDoubles adam_m;
  AlignedDoubles adam_v;
  std::int64_t step = 0;
  std::uint64_t rng_state = 0;

  const ParamSection& section(std::string_view name) const;
  std::span<double> param(std::string_view name);
  std::span<const double> param(std::string_view name) const;

  // FNV-1a over the raw bytes of weights, moments, step and rng_state.
  std::uint64_t checksum() const;
  bool all_finite() const;
};

ModelState init_model(const ModelConfig& config);

// Linear warmup to max_lr, then cosine decay to min_lr_ratio * max_lr at
// total_steps. Steps past total_steps clamp to the final value.
double lr_at(std::int64_t step, const ModelConfig& config);

// Unnormalized next-token scores, one row of vocab_size per input position.
struct Logits {
  std::size_t rows = 0;
  std::size_t vocab = 0;
  AlignedDoubles values;

  std::span<const double> row(std::size_t t) const {
    return std::span<const double>(values).subspan(t * vocab, vocab);
  }
};

// Incremental inference with a key/value cache. Appending tokens in several
// calls yields the same rows as one call with the concatenation.
class InferenceSession {
 public:
  explicit InferenceSession(const ModelState& state);
  ~InferenceSession();
  InferenceSession(InferenceSession&&) noexcept;
  InferenceSession& operator=(InferenceSession&&) noexcept;

  Logits append(std::span<const TokenId> tokens);
  std::size_t length() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Logits forward(const ModelState& state, std::span<const TokenId> tokens);

// Lowest index among maximal entries.
std::size_t argmax(std::span<const double> row);

TokenSeq greedy_decode(const ModelState& state, std::span<const TokenId> prefix,
                       std::size_t n = 32);

// Entry i is log p(tokens[i+1] | tokens[0..i]).
std::vector<double> token_logprobs(const ModelState& state, std::span<const TokenId> tokens);

struct LossAndGradient {
  double mean_loss = 0.0;            // mean NLL over supervised positions (0 when none)
  AlignedDoubles gradient;           // congruent with weights
  std::vector<double> position_nll;  // rows*cols, 0 at unsupervised positions
};

LossAndGradient loss_and_gradient(const ModelState& state, const Batch& batch);
double batch_loss(const ModelState& state, const Batch& batch);

struct TrainResult {
  double mean_loss = 0.0;  // before the update
  std::vector<double> position_nll;
};

// One clipped AdamW update at `lr`. Throws DivergenceError, leaving the state
// untouched, when the loss or gradient is not finite.
TrainResult train_step(ModelState& state, const Batch& batch, double lr);
// Uses lr_at(state.step).
TrainResult train_step(ModelState& state, const Batch& batch);

struct GradientCheckOptions {
  std::size_t samples = 200;
  double h = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, abs_floor).
  double abs_floor = 1e-7;
  std::uint64_t seed = 1;
  // Test hook applied to the analytic gradient before comparison.
  std::function<void(std::span<double>)> corrupt;
};

struct GradientCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  double max_abs_gradient = 0.0;
};

// Central finite differences against the analytic gradient of batch_loss at a
// freshly initialized model. Intended for micro configs.
GradientCheckResult gradient_check(const ModelConfig& config, const Batch& batch,
                                   const GradientCheckOptions& options = {});
GradientCheckResult gradient_check(const ModelState& state, const Batch& batch,
                                   const GradientCheckOptions& options = {});

}  // namespace forgetrace
