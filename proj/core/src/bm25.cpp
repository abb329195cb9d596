// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>

#include "forgetrace/error.hpp"
#include "forgetrace/memory.hpp"

namespace forgetrace {

void Bm25Index::add(std::int64_t id, std::span<const TokenId> tokens) {
  if (contains(id)) throw ConfigError("duplicate sample id " + std::to_string(id));
  for (TokenId t : tokens) ++postings_[t][id];
  doc_len_[id] = tokens.size();
  total_len_ += tokens.size();
}

void Bm25Index::remove(std::int64_t id) {
  auto it = doc_len_.find(id);
  if (it == doc_len_.end()) throw ConfigError("sample id not in index");
  for (auto p = postings_.begin(); p != postings_.end();) {
    p->second.erase(id);
    p = p->second.empty() ? postings_.erase(p) : std::next(p);
  }
  total_len_ -= it->second;
  doc_len_.erase(it);
}

double Bm25Index::avgdl() const {
  return doc_len_.empty() ? 0.0
                          : static_cast<double>(total_len_) / static_cast<double>(doc_len_.size());
}

double Bm25Index::idf(TokenId term) const {
  const double n = static_cast<double>(doc_len_.size());
  auto it = postings_.find(term);
  const double nt = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
  return std::log((n - nt + 0.5) / (nt + 0.5) + 1.0);
}

std::vector<std::int64_t> Bm25Index::ids() const {
  std::vector<std::int64_t> out;
  for (const auto& [id, len] : doc_len_) out.push_back(id);
  return out;
}

double Bm25Index::term_weight(TokenId term, std::size_t tf, std::size_t len) const {
  const double f = static_cast<double>(tf);
  const double norm = k1_ * (1.0 - b_ + b_ * static_cast<double>(len) / avgdl());
  return idf(term) * f * (k1_ + 1.0) / (f + norm);
}

double Bm25Index::score(std::span<const TokenId> query, std::int64_t id) const {
  auto len = doc_len_.find(id);
  if (len == doc_len_.end()) throw ConfigError("sample id not in index");
  const std::set<TokenId> terms(query.begin(), query.end());
  double s = 0.0;
  for (TokenId t : terms) {
    auto p = postings_.find(t);
    if (p == postings_.end()) continue;
    auto tf = p->second.find(id);
    if (tf == p->second.end()) continue;
    s += term_weight(t, tf->second, len->second);
  }
  return s;
}

std::map<std::int64_t, double> Bm25Index::scores(std::span<const TokenId> query) const {
  const std::set<TokenId> terms(query.begin(), query.end());
  std::map<std::int64_t, double> out;
  for (TokenId t : terms) {
    auto p = postings_.find(t);
    if (p == postings_.end()) continue;
    for (const auto& [id, tf] : p->second) out[id] += term_weight(t, tf, doc_len_.at(id));
  }
  return out;
}

}  // namespace forgetrace
