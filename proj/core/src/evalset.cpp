// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

// Entity eval-set construction, the memorization filter, and JSONL I/O.

#include <algorithm>
#include <fstream>
#include <set>

#include "forgetrace/error.hpp"
#include "forgetrace/metrics.hpp"
#include "json.hpp"

namespace forgetrace {

using json = nlohmann::json;

namespace {

std::map<std::int64_t, std::size_t> count_entities(std::span<const Document> docs,
                                                   const EntityDictionary& dict) {
  std::map<std::int64_t, std::size_t> counts;
  for (const auto& [id, entry] : dict.entries()) counts[id] = 0;
  for (const auto& d : docs) {
    for (const auto& s : d.entities) {
      if (counts.contains(s.entity_id)) ++counts[s.entity_id];
    }
  }
  return counts;
}

double median(std::vector<std::size_t> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return static_cast<double>(values[n / 2]);
  return 0.5 * static_cast<double>(values[n / 2 - 1] + values[n / 2]);
}

std::vector<std::size_t> values_of(const std::map<std::int64_t, std::size_t>& m) {
  std::vector<std::size_t> v;
  for (const auto& [k, x] : m) v.push_back(x);
  return v;
}

}  // namespace

std::vector<EvalItem> build_entity_evalset(std::span<const Document> a,
                                           std::span<const Document> b,
                                           const EntityDictionary& dict) {
  if (dict.size() == 0) throw ConfigError("empty intersection");
  const auto count_a = count_entities(a, dict);
  const auto count_b = count_entities(b, dict);
  const double med_a = median(values_of(count_a));
  const double med_b = median(values_of(count_b));

  // A value equal to the median belongs to the upper half.
  std::set<std::int64_t> selected;
  for (const auto& [id, ca] : count_a) {
    const auto cb = count_b.at(id);
    if (static_cast<double>(ca) >= med_a && static_cast<double>(cb) < med_b && ca > 0) {
      selected.insert(id);
    }
  }
  if (selected.empty()) throw ConfigError("empty intersection");

  std::vector<const Document*> order;
  for (const auto& d : a) order.push_back(&d);
  std::sort(order.begin(), order.end(),
            [](const Document* x, const Document* y) { return x->doc_id < y->doc_id; });

  std::vector<EvalItem> items;
  std::int64_t pair = 0;
  for (const Document* d : order) {
    std::vector<EntitySpan> spans = d->entities;
    std::sort(spans.begin(), spans.end(), [](const EntitySpan& x, const EntitySpan& y) {
      return x.token_start < y.token_start;
    });
    const auto& tok = d->tokens;
    for (const auto& s : spans) {
      if (!selected.contains(s.entity_id)) continue;
      if (s.token_start < kEvalWindow || s.token_end + kEvalWindow > tok.size()) continue;
      const TokenSeq& entity = dict.at(s.entity_id).tokens;
      const auto at = [&tok](std::size_t i) { return tok.begin() + static_cast<std::ptrdiff_t>(i); };

      EvalItem exc;
      exc.prefix.assign(at(s.token_start - kEvalWindow), at(s.token_start));
      if (is_substring(entity, exc.prefix)) continue;
      exc.target.assign(at(s.token_start), at(s.token_start + kEvalWindow));

      EvalItem inc;
      inc.prefix.assign(at(s.token_end - kEvalWindow), at(s.token_end));
      inc.target.assign(at(s.token_end), at(s.token_end + kEvalWindow));

      for (EvalItem* it : {&inc, &exc}) {
        it->doc_id = d->doc_id;
        it->entity_id = s.entity_id;
        it->entity_tokens = entity;
        it->type = s.type;
        it->span_start = s.token_start;
      }
      inc.mode = EvalMode::inclusive;
      inc.item_id = 2 * pair;
      exc.mode = EvalMode::exclusive;
      exc.item_id = 2 * pair + 1;
      items.push_back(std::move(inc));
      items.push_back(std::move(exc));
      ++pair;
    }
  }
  return items;
}

std::vector<EvalItem> filter_memorized(const ModelState& state, std::span<const EvalItem> items) {
  std::set<std::int64_t> keep;
  for (const auto& it : items) {
    if (it.mode == EvalMode::exclusive && m_ex_hit(state, it)) keep.insert(it.pair_id());
  }
  std::vector<EvalItem> out;
  for (const auto& it : items) {
    if (keep.contains(it.pair_id())) out.push_back(it);
  }
  return out;
}

void write_evalset_jsonl(const std::filesystem::path& path, std::span<const EvalItem> items) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& it : items) {
    json j;
    j["item_id"] = it.item_id;
    j["doc_id"] = it.doc_id;
    j["entity_id"] = it.entity_id;
    j["mode"] = to_string(it.mode);
    j["prefix"] = it.prefix;
    j["target"] = it.target;
    j["entity_tokens"] = it.entity_tokens;
    j["type"] = to_string(it.type);
    j["span_start"] = it.span_start;
    out << j.dump() << '\n';
  }
}

std::vector<EvalItem> read_evalset_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<EvalItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      EvalItem it;
      it.item_id = j.at("item_id").get<std::int64_t>();
      it.doc_id = j.at("doc_id").get<std::int64_t>();
      it.entity_id = j.at("entity_id").get<std::int64_t>();
      it.mode = parse_eval_mode(j.at("mode").get<std::string>());
      it.prefix = j.at("prefix").get<TokenSeq>();
      it.target = j.at("target").get<TokenSeq>();
      it.entity_tokens = j.value("entity_tokens", TokenSeq{});
      it.type = parse_entity_type(j.value("type", std::string("MISC")));
      it.span_start = j.value("span_start", std::size_t{0});
      items.push_back(std::move(it));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return items;
}

}  // namespace forgetrace
