// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace forgetrace {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

enum class Source : std::uint8_t { A, B };

enum class EntityType : std::uint8_t { MISC, PER, LOC, ORG };

inline constexpr std::array<EntityType, 4> kEntityTypes = {
    EntityType::MISC, EntityType::PER, EntityType::LOC, EntityType::ORG};

std::string_view to_string(EntityType type);
std::string_view to_string(Source source);
EntityType parse_entity_type(std::string_view text);
Source parse_source(std::string_view text);

// A rectangular block of token rows for training. mask[r * cols + t] marks
// position t as supervised: its target is tokens[r * cols + t + 1].
struct Batch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<TokenId> tokens;
  std::vector<std::uint8_t> mask;

  TokenId token(std::size_t r, std::size_t t) const { return tokens[r * cols + t]; }
  bool supervised(std::size_t r, std::size_t t) const { return mask[r * cols + t] != 0; }
  std::size_t supervised_count() const;

  // Throws ConfigError when shapes disagree, an id is out of range, or a
  // supervised position has no successor.
  void validate(std::size_t vocab_size) const;
};

}  // namespace forgetrace
