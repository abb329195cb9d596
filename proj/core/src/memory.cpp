// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include "forgetrace/memory.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "forgetrace/error.hpp"
#include "json.hpp"

namespace forgetrace {

using json = nlohmann::json;

std::string_view to_string(StorageKind kind) {
  switch (kind) {
    case StorageKind::all: return "all";
    case StorageKind::entity_only: return "entity_only";
    case StorageKind::high_loss: return "high_loss";
  }
  return "all";
}

std::string_view to_string(RetrievalKind kind) {
  return kind == RetrievalKind::random ? "random" : "bm25";
}

StorageKind parse_storage_kind(std::string_view text) {
  for (StorageKind k : {StorageKind::all, StorageKind::entity_only, StorageKind::high_loss}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown storage policy '" + std::string(text) + "'");
}

RetrievalKind parse_retrieval_kind(std::string_view text) {
  if (text == "random") return RetrievalKind::random;
  if (text == "bm25") return RetrievalKind::bm25;
  throw ConfigError("unknown retrieval strategy '" + std::string(text) + "'");
}

Memory::Memory(MemoryConfig config) : config_(config) {
  if (config_.max_replays && *config_.max_replays < 1) {
    throw ConfigError("max_replays must be ≥ 1");
  }
  const double f = config_.storage.high_loss_fraction;
  if (config_.storage.kind == StorageKind::high_loss && !(f > 0.0 && f <= 1.0)) {
    throw ConfigError("high_loss_fraction must be in (0, 1]");
  }
}

std::size_t Memory::store(std::span<const Document> batch, std::span<const double> losses,
                          std::int64_t step) {
  if (losses.size() != batch.size()) throw ConfigError("losses do not align with batch");

  std::vector<std::size_t> chosen;
  switch (config_.storage.kind) {
    case StorageKind::all:
      chosen.resize(batch.size());
      std::iota(chosen.begin(), chosen.end(), 0);
      break;
    case StorageKind::entity_only:
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].has_entity()) chosen.push_back(i);
      }
      break;
    case StorageKind::high_loss: {
      chosen.resize(batch.size());
      std::iota(chosen.begin(), chosen.end(), 0);
      std::stable_sort(chosen.begin(), chosen.end(),
                       [&](std::size_t x, std::size_t y) { return losses[x] > losses[y]; });
      const auto take = static_cast<std::size_t>(
          std::ceil(config_.storage.high_loss_fraction * static_cast<double>(batch.size())));
      chosen.resize(std::min(take, chosen.size()));
      std::sort(chosen.begin(), chosen.end());
      break;
    }
  }

  std::size_t added = 0;
  for (std::size_t i : chosen) {
    const Document& d = batch[i];
    if (known(d.doc_id) || d.tokens.empty()) continue;
    insert({d.doc_id, d.tokens, d.has_entity(), losses[i], 0, step});
    ++added;
  }
  enforce_capacity();
  return added;
}

void Memory::insert(MemoryEntry entry) {
  if (config_.retrieval == RetrievalKind::bm25) index_.add(entry.sample_id, entry.tokens);
  order_.push_back(entry.sample_id);
  const auto id = entry.sample_id;
  live_.emplace(id, std::move(entry));
}

void Memory::enforce_capacity() {
  if (config_.capacity == 0) return;
  while (live_.size() > config_.capacity && !order_.empty()) {
    const auto id = order_.front();
    order_.pop_front();
    if (!live_.contains(id)) continue;
    if (index_.contains(id)) index_.remove(id);
    live_.erase(id);
  }
}

std::vector<std::int64_t> Memory::retrieve(std::span<const Document> current, std::size_t k,
                                           Rng& rng) const {
  if (k == 0) throw ConfigError("k must be ≥ 1");
  std::vector<std::int64_t> eligible = eligible_ids();
  if (eligible.empty()) return {};

  if (config_.retrieval == RetrievalKind::random) {
    const std::size_t take = std::min(k, eligible.size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
      std::swap(eligible[i], eligible[j]);
    }
    eligible.resize(take);
    return eligible;
  }

  if (current.empty()) return {};
  // Full ranking per query: score descending, id ascending, zero scores last.
  std::vector<std::vector<std::int64_t>> rankings;
  for (const auto& q : current) {
    const auto nonzero = index_.scores(q.tokens);
    std::vector<std::pair<double, std::int64_t>> ranked;
    ranked.reserve(eligible.size());
    for (std::int64_t id : eligible) {
      auto it = nonzero.find(id);
      ranked.emplace_back(it == nonzero.end() ? 0.0 : it->second, id);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    std::vector<std::int64_t> ids;
    ids.reserve(ranked.size());
    for (const auto& [s, id] : ranked) ids.push_back(id);
    rankings.push_back(std::move(ids));
  }

  const std::size_t want = std::min(k, eligible.size());
  std::vector<std::int64_t> out;
  std::set<std::int64_t> taken;
  std::vector<std::size_t> cursor(rankings.size(), 0);
  while (out.size() < want) {
    for (std::size_t q = 0; q < rankings.size() && out.size() < want; ++q) {
      auto& c = cursor[q];
      while (c < rankings[q].size() && taken.contains(rankings[q][c])) ++c;
      if (c == rankings[q].size()) continue;
      taken.insert(rankings[q][c]);
      out.push_back(rankings[q][c]);
    }
  }
  return out;
}

void Memory::mark_replayed(std::span<const std::int64_t> ids) {
  std::set<std::int64_t> seen;
  for (std::int64_t id : ids) {
    if (!live_.contains(id)) throw ConfigError("entry " + std::to_string(id) + " is not live");
    if (!seen.insert(id).second) {
      throw ConfigError("entry " + std::to_string(id) + " marked twice in one event");
    }
  }
  for (std::int64_t id : ids) {
    auto it = live_.find(id);
    ++it->second.replay_count;
    if (config_.max_replays && it->second.replay_count >= *config_.max_replays) {
      if (index_.contains(id)) index_.remove(id);
      retired_.insert(live_.extract(it));
    }
  }
}

const MemoryEntry& Memory::entry(std::int64_t id) const {
  if (auto it = live_.find(id); it != live_.end()) return it->second;
  if (auto it = retired_.find(id); it != retired_.end()) return it->second;
  throw ConfigError("unknown sample id " + std::to_string(id));
}

std::vector<std::int64_t> Memory::eligible_ids() const {
  std::vector<std::int64_t> out;
  out.reserve(live_.size());
  for (const auto& [id, e] : live_) out.push_back(id);
  return out;
}

int Memory::max_replay_count() const {
  int m = 0;
  for (const auto* set : {&live_, &retired_}) {
    for (const auto& [id, e] : *set) m = std::max(m, e.replay_count);
  }
  return m;
}

std::map<int, Memory::HistogramRow> Memory::replay_histogram() const {
  std::map<int, HistogramRow> h;
  for (const auto& [id, e] : live_) ++h[e.replay_count].eligible;
  for (const auto& [id, e] : retired_) ++h[e.replay_count].retired;
  return h;
}

void Memory::dump(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  auto write = [&out](const MemoryEntry& e, bool retired) {
    json j;
    j["sample_id"] = e.sample_id;
    j["tokens"] = e.tokens;
    j["has_entity"] = e.has_entity;
    j["last_loss"] = e.last_loss;
    j["replay_count"] = e.replay_count;
    j["insert_step"] = e.insert_step;
    j["retired"] = retired;
    out << j.dump() << '\n';
  };
  // Insertion order keeps the FIFO state reconstructible.
  std::set<std::int64_t> written;
  for (std::int64_t id : order_) {
    if (auto it = live_.find(id); it != live_.end() && written.insert(id).second) {
      write(it->second, false);
    }
  }
  for (const auto& [id, e] : retired_) write(e, true);
}

Memory Memory::restore(const std::filesystem::path& path, MemoryConfig config) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  Memory m(config);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      MemoryEntry e;
      e.sample_id = j.at("sample_id").get<std::int64_t>();
      e.tokens = j.at("tokens").get<TokenSeq>();
      e.has_entity = j.at("has_entity").get<bool>();
      e.last_loss = j.at("last_loss").get<double>();
      e.replay_count = j.at("replay_count").get<int>();
      e.insert_step = j.at("insert_step").get<std::int64_t>();
      if (m.known(e.sample_id)) throw FormatError("duplicate sample id in memory dump");
      if (e.tokens.empty()) throw FormatError("memory entry without tokens");
      if (j.value("retired", false)) {
        const auto id = e.sample_id;
        m.retired_.emplace(id, std::move(e));
      } else {
        m.insert(std::move(e));
      }
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return m;
}

}  // namespace forgetrace
