// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include "forgetrace/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "forgetrace/error.hpp"

namespace forgetrace {

namespace {

constexpr Strategy kStrategies[] = {Strategy::vanilla,          Strategy::upper_bound,
                                    Strategy::bm25_all,         Strategy::bm25_entity,
                                    Strategy::focused_stochastic, Strategy::intensive_focused};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::int64_t to_int(const std::string& v) {
  std::int64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("not an integer");
  return x;
}

std::size_t to_size(const std::string& v) {
  const std::int64_t x = to_int(v);
  if (x < 0) throw ConfigError("must be ≥ 0");
  return static_cast<std::size_t>(x);
}

double to_real(const std::string& v) {
  double x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("not a number");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("not a boolean");
}

std::vector<std::int64_t> to_int_list(const std::string& v) {
  std::vector<std::int64_t> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_int(trim(item)));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

std::string join(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string real(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Declaration order is the order of to_text().
const std::vector<std::pair<std::string, Field>>& fields() {
  using C = RunConfig;
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    auto add = [&t](std::string key, Field f) { t.emplace_back(std::move(key), std::move(f)); };
#define FT_STR(name) \
  add(#name, {[](C& c, const std::string& v) { c.name = v; }, [](const C& c) { return c.name; }})
#define FT_INT(name)                                                   \
  add(#name, {[](C& c, const std::string& v) { c.name = to_int(v); }, \
              [](const C& c) { return std::to_string(c.name); }})
#define FT_SIZE(name)                                                   \
  add(#name, {[](C& c, const std::string& v) { c.name = to_size(v); }, \
              [](const C& c) { return std::to_string(c.name); }})
#define FT_REAL(name)                                                   \
  add(#name, {[](C& c, const std::string& v) { c.name = to_real(v); }, \
              [](const C& c) { return real(c.name); }})
#define FT_BOOL(name)                                                   \
  add(#name, {[](C& c, const std::string& v) { c.name = to_bool(v); }, \
              [](const C& c) { return std::string(c.name ? "true" : "false"); }})
#define FT_MODEL_INT(name)                                                    \
  add(#name, {[](C& c, const std::string& v) { c.model.name = static_cast<decltype(c.model.name)>(to_int(v)); }, \
              [](const C& c) { return std::to_string(c.model.name); }})
#define FT_MODEL_REAL(name)                                                   \
  add(#name, {[](C& c, const std::string& v) { c.model.name = to_real(v); }, \
              [](const C& c) { return real(c.model.name); }})

    add("strategy", {[](C& c, const std::string& v) { c.strategy = parse_strategy(v); },
                     [](const C& c) { return std::string(to_string(c.strategy)); }});
    add("seeds", {[](C& c, const std::string& v) { c.seeds = to_int_list(v); },
                  [](const C& c) { return join(c.seeds); }});
    add("corpus_mode", {[](C& c, const std::string& v) { c.corpus_mode = parse_compose_mode(v); },
                        [](const C& c) { return std::string(to_string(c.corpus_mode)); }});
    FT_STR(corpus_a);
    FT_STR(corpus_b);
    FT_STR(vocab);
    FT_STR(entities);
    FT_STR(evalset);
    FT_SIZE(batch_size);
    FT_SIZE(seq_len);
    FT_SIZE(epochs);
    FT_SIZE(a_epochs);
    FT_INT(warmup_steps);
    FT_INT(eval_every);
    FT_SIZE(eval_pairs_per_entity);
    FT_BOOL(filter_memorized);
    FT_INT(checkpoint_every);
    FT_INT(replay_interval);
    FT_INT(replay_epochs);
    FT_INT(max_replays);
    add("storage", {[](C& c, const std::string& v) { c.storage = parse_storage_kind(v); },
                    [](const C& c) { return std::string(to_string(c.effective_storage())); }});
    FT_REAL(high_loss_fraction);
    FT_SIZE(memory_capacity);
    FT_INT(upper_bound_max_epochs);
    FT_REAL(upper_bound_lr);
    FT_SIZE(window_batch_rows);
    add("curve_epochs", {[](C& c, const std::string& v) { c.curve_epochs = to_int_list(v); },
                         [](const C& c) { return join(c.curve_epochs); }});
    FT_SIZE(curve_buckets);
    FT_SIZE(curve_bucket);
    FT_INT(curve_steps);
    FT_INT(curve_eval_every);
    FT_REAL(curve_lr);
    FT_BOOL(periodic);
    FT_INT(periodic_interval);
    FT_INT(periodic_epochs);
    FT_INT(periodic_from);
    FT_MODEL_INT(n_layers);
    FT_MODEL_INT(d_model);
    FT_MODEL_INT(n_heads);
    FT_MODEL_INT(d_ffn);
    FT_MODEL_INT(vocab_size);
    FT_MODEL_INT(context_len);
    FT_MODEL_REAL(max_lr);
    FT_MODEL_REAL(min_lr_ratio);
    FT_MODEL_REAL(beta1);
    FT_MODEL_REAL(beta2);
    FT_MODEL_REAL(adam_eps);
    FT_MODEL_REAL(weight_decay);
    FT_MODEL_REAL(grad_clip);
    FT_MODEL_REAL(init_std);
#undef FT_STR
#undef FT_INT
#undef FT_SIZE
#undef FT_REAL
#undef FT_BOOL
#undef FT_MODEL_INT
#undef FT_MODEL_REAL
    return t;
  }();
  return table;
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::vanilla: return "vanilla";
    case Strategy::upper_bound: return "upper_bound";
    case Strategy::bm25_all: return "bm25_all";
    case Strategy::bm25_entity: return "bm25_entity";
    case Strategy::focused_stochastic: return "focused_stochastic";
    case Strategy::intensive_focused: return "intensive_focused";
  }
  return "vanilla";
}

Strategy parse_strategy(std::string_view text) {
  for (Strategy s : kStrategies) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown strategy '" + std::string(text) + "'");
}

bool replays(Strategy s) { return s != Strategy::vanilla && s != Strategy::upper_bound; }

StorageKind RunConfig::effective_storage() const {
  if (storage) return *storage;
  return strategy == Strategy::bm25_all ? StorageKind::all : StorageKind::entity_only;
}

MemoryConfig RunConfig::memory_config() const {
  MemoryConfig m;
  m.storage = {effective_storage(), high_loss_fraction};
  const bool bm25 = strategy == Strategy::bm25_all || strategy == Strategy::bm25_entity;
  m.retrieval = bm25 ? RetrievalKind::bm25 : RetrievalKind::random;
  const bool exits =
      strategy == Strategy::focused_stochastic || strategy == Strategy::intensive_focused;
  if (exits) {
    m.max_replays = static_cast<int>(max_replays);
  } else {
    m.max_replays.reset();
  }
  m.capacity = memory_capacity;
  return m;
}

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> v;
  if (seeds.empty()) v.emplace_back("seeds must not be empty");
  if (batch_size < 1) v.emplace_back("batch_size must be ≥ 1");
  if (seq_len < 2) v.emplace_back("seq_len must be ≥ 2");
  if (seq_len > static_cast<std::size_t>(model.context_len)) {
    v.emplace_back("seq_len must be ≤ context_len");
  }
  if (epochs < 1) v.emplace_back("epochs must be ≥ 1");
  if (a_epochs < 1) v.emplace_back("a_epochs must be ≥ 1");
  if (warmup_steps < -1) v.emplace_back("warmup_steps must be ≥ 0 (or -1 for 1%)");
  if (eval_every < 1) v.emplace_back("eval_every must be ≥ 1");
  if (checkpoint_every < 0) v.emplace_back("checkpoint_every must be ≥ 0");
  if (replay_interval < 1) v.emplace_back("replay_interval must be ≥ 1");
  if (replay_epochs < 1) v.emplace_back("replay_epochs must be ≥ 1");
  if (max_replays < 1) v.emplace_back("max_replays must be ≥ 1");
  if (!(high_loss_fraction > 0.0 && high_loss_fraction <= 1.0)) {
    v.emplace_back("high_loss_fraction must be in (0, 1]");
  }
  if (upper_bound_max_epochs < 1) v.emplace_back("upper_bound_max_epochs must be ≥ 1");
  if (upper_bound_lr < 0.0) v.emplace_back("upper_bound_lr must be ≥ 0");
  if (window_batch_rows < 1) v.emplace_back("window_batch_rows must be ≥ 1");
  if (curve_epochs.empty()) v.emplace_back("curve_epochs must not be empty");
  for (auto e : curve_epochs) {
    if (e < 0) {
      v.emplace_back("curve_epochs entries must be ≥ 0");
      break;
    }
  }
  if (curve_buckets < 2) v.emplace_back("curve_buckets must be ≥ 2");
  if (curve_bucket >= curve_buckets) v.emplace_back("curve_bucket must be < curve_buckets");
  if (curve_steps < 0) v.emplace_back("curve_steps must be ≥ 0");
  if (curve_eval_every < 1) v.emplace_back("curve_eval_every must be ≥ 1");
  if (curve_lr < 0.0) v.emplace_back("curve_lr must be ≥ 0");
  if (periodic && periodic_interval < 1) v.emplace_back("periodic_interval must be ≥ 1");
  if (periodic && periodic_epochs < 1) v.emplace_back("periodic_epochs must be ≥ 1");

  const StorageKind st = effective_storage();
  switch (strategy) {
    case Strategy::bm25_all:
      if (st == StorageKind::entity_only) {
        v.emplace_back("bm25_all requires storage=all or storage=high_loss");
      }
      break;
    case Strategy::bm25_entity:
      if (st != StorageKind::entity_only) v.emplace_back("bm25_entity requires storage=entity_only");
      break;
    case Strategy::focused_stochastic:
      if (st != StorageKind::entity_only) {
        v.emplace_back("focused_stochastic requires storage=entity_only");
      }
      if (replay_epochs != 1) v.emplace_back("focused_stochastic requires replay_epochs=1");
      break;
    case Strategy::intensive_focused:
      if (st != StorageKind::entity_only) {
        v.emplace_back("intensive_focused requires storage=entity_only");
      }
      break;
    case Strategy::vanilla:
    case Strategy::upper_bound:
      break;
  }
  for (const auto& m : model.violations()) {
    if (m.starts_with("total_steps") || m.starts_with("warmup_steps")) continue;
    v.push_back(m);
  }
  return v;
}

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

RunConfig parse_run_config(std::string_view text, std::optional<Strategy> strategy) {
  std::map<std::string, const Field*> by_name;
  for (const auto& [name, f] : fields()) by_name[name] = &f;

  RunConfig c;
  std::vector<std::string> problems;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) {
      problems.push_back(where + "expected key = value");
      continue;
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    auto it = by_name.find(key);
    if (it == by_name.end()) {
      problems.push_back(where + "unknown key '" + key + "'");
      continue;
    }
    if (!seen.insert(key).second) {
      problems.push_back(where + "duplicate key '" + key + "'");
      continue;
    }
    try {
      it->second->set(c, value);
    } catch (const ConfigError& e) {
      problems.push_back(where + key + ": " + e.what());
    }
  }
  if (strategy) c.strategy = *strategy;
  if (c.strategy == Strategy::intensive_focused && !seen.contains("replay_epochs")) {
    c.replay_epochs = 5;
  }
  if (!seen.contains("seq_len")) {
    c.seq_len = static_cast<std::size_t>(c.model.context_len);
  }
  for (auto& v : c.violations()) problems.push_back(std::move(v));
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "\n") + p;
    throw ConfigError(msg);
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<Strategy> strategy) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), strategy);
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace forgetrace
