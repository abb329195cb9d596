// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include "forgetrace/corpus.hpp"
#include "forgetrace/error.hpp"

namespace forgetrace {

EntityDictionary::EntityDictionary(std::span<const EntityRecord> records, const Vocab& vocab) {
  for (const auto& r : records) {
    EntityEntry e;
    e.surface = r.surface;
    e.tokens = tokenize(r.surface, vocab);
    e.type = r.type;
    add(r.entity_id, std::move(e));
  }
}

void EntityDictionary::add(std::int64_t entity_id, EntityEntry entry) {
  if (entry.surface.empty() || entry.tokens.empty()) {
    throw FormatError("entity " + std::to_string(entity_id) + " has an empty surface form");
  }
  if (!entries_.emplace(entity_id, std::move(entry)).second) {
    throw FormatError("duplicate entity_id " + std::to_string(entity_id));
  }
}

const EntityEntry& EntityDictionary::at(std::int64_t entity_id) const {
  auto it = entries_.find(entity_id);
  if (it == entries_.end()) throw ConfigError("unknown entity_id " + std::to_string(entity_id));
  return it->second;
}

EntityTagger::EntityTagger(const EntityDictionary& dict, const Vocab& vocab) {
  nodes_.emplace_back();
  for (const auto& [id, entry] : dict.entries()) {
    bool has_unk = false;
    for (TokenId t : entry.tokens) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab.size()) {
        throw ConfigError("dictionary/vocab mismatch");
      }
      has_unk |= (t == Vocab::kUnk);
    }
    if (has_unk) continue;
    std::int32_t node = 0;
    for (TokenId t : entry.tokens) {
      auto it = nodes_[node].children.find(t);
      if (it == nodes_[node].children.end()) {
        const auto next = static_cast<std::int32_t>(nodes_.size());
        nodes_[node].children.emplace(t, next);
        nodes_.emplace_back();
        node = next;
      } else {
        node = it->second;
      }
    }
    // Entries iterate in ascending id order; the first claim wins.
    if (nodes_[node].entity_id < 0) {
      nodes_[node].entity_id = id;
      nodes_[node].type = entry.type;
    }
  }
}

std::vector<EntitySpan> EntityTagger::find(std::span<const TokenId> tokens) const {
  std::vector<EntitySpan> spans;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::int32_t node = 0;
    std::size_t best_end = 0;
    std::int32_t best_node = -1;
    for (std::size_t j = i; j < tokens.size(); ++j) {
      auto it = nodes_[node].children.find(tokens[j]);
      if (it == nodes_[node].children.end()) break;
      node = it->second;
      if (nodes_[node].entity_id >= 0) {
        best_end = j + 1;
        best_node = node;
      }
    }
    if (best_node >= 0) {
      spans.push_back({nodes_[best_node].entity_id, i, best_end, nodes_[best_node].type});
      i = best_end;
    } else {
      ++i;
    }
  }
  return spans;
}

Document tag_entities(Document doc, const EntityDictionary& dict, const Vocab& vocab) {
  EntityTagger tagger(dict, vocab);
  doc.entities = tagger.find(doc.tokens);
  return doc;
}

void tag_documents(std::span<Document> docs, const EntityDictionary& dict, const Vocab& vocab) {
  EntityTagger tagger(dict, vocab);
  for (auto& d : docs) d.entities = tagger.find(d.tokens);
}

}  // namespace forgetrace
