// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "forgetrace/model.hpp"

namespace forgetrace {

// Binary layout, all little-endian:
//
//   "FTRC"            4 bytes
//   version           u32 (currently 1)
//   config            6 x i32 (layers, d_model, heads, d_ffn, vocab, context)
//                     2 x f64 (max_lr, min_lr_ratio)
//                     2 x i64 (warmup_steps, total_steps)
//                     6 x f64 (beta1, beta2, adam_eps, weight_decay, grad_clip, init_std)
//                     u64 init_seed
//   section count     u32
//   per section       u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64
//   adam_m, adam_v    u64 count, count f64 each
//   step              i64
//   rng_state         u64
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const ModelState& state);
ModelState deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace forgetrace
