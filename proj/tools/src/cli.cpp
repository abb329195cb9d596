// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include "forgetrace/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "forgetrace/corpus.hpp"
#include "forgetrace/error.hpp"
#include "forgetrace/memory.hpp"
#include "forgetrace/metrics.hpp"
#include "forgetrace/report.hpp"
#include "forgetrace/run_config.hpp"
#include "forgetrace/scheduler.hpp"
#include "forgetrace/synth.hpp"

namespace forgetrace::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::optional<std::int64_t> seed;
  std::string config;
  std::string out_dir;
  std::string data_dir;
};

// Set once a command starts writing; errors after that are runtime failures.
struct Progress {
  bool started = false;
};

fs::path data_root(const Common& c) {
  if (!c.data_dir.empty()) return c.data_dir;
  if (const char* env = std::getenv("FORGETRACE_DATA_DIR"); env && *env) return env;
  return "data";
}

RunConfig load_config(const Common& c, std::optional<Strategy> strategy = {}) {
  return c.config.empty() ? parse_run_config("", strategy) : load_run_config(c.config, strategy);
}

void require_out_dir(const Common& c) {
  if (c.out_dir.empty()) throw ConfigError("--out-dir is required");
}

void check(const RunConfig& config) {
  const auto problems = config.violations();
  if (problems.empty()) return;
  std::string msg;
  for (const auto& p : problems) msg += (msg.empty() ? "" : "\n") + p;
  throw ConfigError(msg);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// --- build-corpus ----------------------------------------------------------

struct BuildCorpusArgs {
  std::string synthetic;
  std::string a, b;
  std::size_t vocab_size = 2048;
};

void build_corpus(const Common& c, const BuildCorpusArgs& args, Progress& p, std::ostream& out) {
  require_out_dir(c);
  const fs::path dir = c.out_dir;
  if (!args.synthetic.empty()) {
    SynthConfig sc;
    if (args.synthetic == "desk") {
      sc = SynthConfig::desk();
    } else if (args.synthetic == "tiny") {
      sc = SynthConfig::tiny();
    } else {
      throw ConfigError("unknown synthetic scale '" + args.synthetic + "'");
    }
    if (c.seed) sc.seed = static_cast<std::uint64_t>(*c.seed);
    const SynthCorpus corpus = generate_synthetic(sc);
    p.started = true;
    write_synthetic(corpus, dir);
    out << "a_docs=" << corpus.a.size() << " b_docs=" << corpus.b.size()
        << " entities=" << corpus.entities.size() << " vocab=" << corpus.vocab.size() << "\n";
    return;
  }
  if (args.a.empty() || args.b.empty()) {
    throw ConfigError("build-corpus needs --synthetic or both --a and --b");
  }
  auto a = read_documents_jsonl(args.a, Source::A);
  auto b = read_documents_jsonl(args.b, Source::B);
  for (auto& d : b) d.source = Source::B;
  std::vector<Document> all = a;
  all.insert(all.end(), b.begin(), b.end());
  const Vocab vocab = build_vocab(all, args.vocab_size);
  tokenize_documents(a, vocab);
  tokenize_documents(b, vocab);
  p.started = true;
  fs::create_directories(dir);
  write_documents_jsonl(dir / "a.jsonl", a, true);
  write_documents_jsonl(dir / "b.jsonl", b, true);
  vocab.save(dir / "vocab.txt");
  out << "a_docs=" << a.size() << " b_docs=" << b.size() << " vocab=" << vocab.size() << "\n";
}

// --- tag-entities / build-evalset --------------------------------------------

void tag_entities_cmd(const Common& c, Progress& p, std::ostream& out) {
  require_out_dir(c);
  const RunConfig config = load_config(c);
  const fs::path root = data_root(c);
  if (!fs::exists(root / config.entities)) {
    throw ConfigError("missing entity dictionary " + (root / config.entities).string());
  }
  const RunData data = load_corpora(config, root);
  p.started = true;
  const fs::path dir = c.out_dir;
  fs::create_directories(dir);
  write_documents_jsonl(dir / config.corpus_a, data.a, true);
  write_documents_jsonl(dir / config.corpus_b, data.b, true);
  data.vocab.save(dir / config.vocab);
  write_entities_jsonl(dir / config.entities, read_entities_jsonl(root / config.entities));
  std::size_t spans = 0;
  for (const auto* docs : {&data.a, &data.b}) {
    for (const auto& d : *docs) spans += d.entities.size();
  }
  out << "spans=" << spans << "\n";
}

void build_evalset_cmd(const Common& c, Progress& p, std::ostream& out) {
  require_out_dir(c);
  const RunConfig config = load_config(c);
  const RunData data = load_corpora(config, data_root(c));
  const auto items = build_entity_evalset(data.a, data.b, data.dict);
  p.started = true;
  fs::create_directories(c.out_dir);
  write_evalset_jsonl(fs::path(c.out_dir) / config.evalset, items);
  std::set<std::int64_t> entities;
  for (const auto& it : items) entities.insert(it.entity_id);
  out << "items=" << items.size() << " entities=" << entities.size() << "\n";
}

// --- train / curve ---------------------------------------------------------

std::vector<std::int64_t> seeds_of(const Common& c, const RunConfig& config) {
  if (c.seed) return {*c.seed};
  return config.seeds;
}

RunOptions options_for(std::int64_t seed, const fs::path& dir, std::ostream& err) {
  RunOptions o;
  o.seed = seed;
  o.out_dir = dir;
  o.progress = [&err](const std::string& line) { err << line << std::endl; };
  return o;
}

void train(const Common& c, const std::string& strategy, Progress& p, std::ostream& out,
           std::ostream& err) {
  const std::optional<Strategy> chosen =
      strategy.empty() ? std::nullopt : std::optional(parse_strategy(strategy));
  require_out_dir(c);
  const RunConfig config = load_config(c, chosen);
  const RunData data = load_run_data(config, data_root(c));
  if (data.items.empty()) throw ConfigError("empty eval set");
  const auto seeds = seeds_of(c, config);

  p.started = true;
  const fs::path root = c.out_dir;
  fs::create_directories(root);
  std::vector<MetricReport> finals;
  for (const auto seed : seeds) {
    const fs::path dir = seeds.size() == 1 ? root : root / ("seed_" + std::to_string(seed));
    RunOutputs run = run_strategy(config, data, options_for(seed, dir, err));
    const double ratio = cost_report(run.ledger, config);
    finals.push_back(run.rows.back());
    out << "seed=" << seed << " strategy=" << to_string(config.strategy)
        << " base_updates=" << run.ledger.base_updates
        << " replay_updates=" << run.ledger.replay_updates << " ratio=" << format_real(ratio)
        << " m_ex=" << format_real(run.rows.back().m_ex) << "\n";
  }
  if (seeds.size() > 1) {
    RunConfig c2 = config;
    c2.seeds = seeds;
    write_text(root / "config.cfg", to_text(c2));
    write_summary_csv(root / "summary.csv", finals);
  }
}

void curve(const Common& c, Progress& p, std::ostream& out, std::ostream& err) {
  require_out_dir(c);
  RunConfig config = load_config(c);
  check(config);
  const RunData data = load_run_data(config, data_root(c));
  if (data.items.empty()) throw ConfigError("empty eval set");
  const auto seeds = seeds_of(c, config);

  p.started = true;
  const fs::path root = c.out_dir;
  fs::create_directories(root);
  for (const auto seed : seeds) {
    const fs::path dir = seeds.size() == 1 ? root : root / ("seed_" + std::to_string(seed));
    const CurveOutputs res = run_forgetting_curve(config, data, options_for(seed, dir, err));
    for (const auto& s : res.series) {
      out << "seed=" << seed << " series=" << s.name
          << " m_ex_after_intensive=" << format_real(s.rows.front().m_ex)
          << " m_ex_final=" << format_real(s.rows.back().m_ex)
          << " periodic_sessions=" << s.periodic_sessions << "\n";
    }
  }
}

// --- report / inspect-memory -----------------------------------------------

std::vector<fs::path> split_runs(const std::string& runs) {
  std::vector<fs::path> out;
  std::stringstream in(runs);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    if (!fs::is_directory(item)) throw ConfigError("run directory '" + item + "' not found");
    out.emplace_back(item);
  }
  if (out.empty()) throw ConfigError("--runs is empty");
  return out;
}

void report(const Common& c, const std::string& runs, bool want_table1, Progress& p,
            std::ostream& out) {
  require_out_dir(c);
  const auto dirs = split_runs(runs);
  std::vector<Table1Row> rows;
  if (want_table1) rows = table1(dirs);
  p.started = true;
  const fs::path root = c.out_dir;
  fs::create_directories(root);
  if (want_table1) {
    const std::string csv = table1_csv(rows);
    write_text(root / "table1.csv", csv);
    out << csv;
  }
  for (const auto& f : export_curves(dirs, root)) out << "curve " << f.string() << "\n";
}

void inspect_memory(const std::string& run, std::ostream& out) {
  const fs::path dir = run;
  const auto memory_path = dir / "memory.jsonl";
  if (!fs::exists(memory_path)) throw ConfigError("no memory.jsonl in " + dir.string());
  const RunConfig config = load_run_config(dir / "config.cfg");
  const Memory memory = Memory::restore(memory_path, config.memory_config());
  out << "replay_count,eligible,retired\n";
  for (const auto& [count, row] : memory.replay_histogram()) {
    out << count << "," << row.eligible << "," << row.retired << "\n";
  }
  out << "live=" << memory.size() << " retired=" << memory.retired_count()
      << " max_replay_count=" << memory.max_replay_count() << "\n";
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"forgetrace: forgetting experiments on a tiny language model", "forgetrace"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&common](CLI::App* cmd) {
    cmd->add_option("--seed", common.seed, "Run seed (overrides the config's seed list)");
    cmd->add_option("--config", common.config, "Run config file");
    cmd->add_option("--out-dir", common.out_dir, "Output directory");
    cmd->add_option("--data-dir", common.data_dir,
                    "Data directory (default: $FORGETRACE_DATA_DIR, then ./data)");
  };

  BuildCorpusArgs corpus_args;
  auto* build = app.add_subcommand("build-corpus", "Write a corpus, vocab and entity list");
  add_common(build);
  build->add_option("--synthetic", corpus_args.synthetic, "Generate planted corpora: desk|tiny");
  build->add_option("--a", corpus_args.a, "Corpus A JSONL");
  build->add_option("--b", corpus_args.b, "Corpus B JSONL");
  build->add_option("--vocab-size", corpus_args.vocab_size, "Vocabulary size");

  auto* tag = app.add_subcommand("tag-entities", "Tokenize and tag the corpora");
  add_common(tag);
  auto* evalset = app.add_subcommand("build-evalset", "Build the entity eval set");
  add_common(evalset);

  std::string strategy;
  auto* train_cmd = app.add_subcommand("train", "Run one strategy");
  add_common(train_cmd);
  train_cmd->add_option("--strategy", strategy, "vanilla|upper_bound|bm25_all|bm25_entity|"
                                                "focused_stochastic|intensive_focused");

  auto* curve_cmd = app.add_subcommand("curve", "Run the forgetting-curve protocol");
  add_common(curve_cmd);

  std::string runs;
  bool want_table1 = false;
  auto* report_cmd = app.add_subcommand("report", "Export table1.csv and curves");
  add_common(report_cmd);
  report_cmd->add_option("--runs", runs, "Comma-separated run directories")->required();
  report_cmd->add_flag("--table1", want_table1, "Write table1.csv");

  std::string memory_run;
  auto* mem_cmd = app.add_subcommand("inspect-memory", "Replay-count histogram of a run");
  add_common(mem_cmd);
  mem_cmd->add_option("--run", memory_run, "Run directory")->required();

  if (!args.empty() && !args.front().starts_with("-")) {
    const auto subs = app.get_subcommands([](CLI::App*) { return true; });
    const bool known = std::any_of(subs.begin(), subs.end(),
                                   [&](CLI::App* s) { return s->get_name() == args.front(); });
    if (!known) {
      err << "error: unknown command '" << args.front() << "'\n";
      return kUsage;
    }
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  Progress progress;
  try {
    if (build->parsed()) build_corpus(common, corpus_args, progress, out);
    if (tag->parsed()) tag_entities_cmd(common, progress, out);
    if (evalset->parsed()) build_evalset_cmd(common, progress, out);
    if (train_cmd->parsed()) train(common, strategy, progress, out, err);
    if (curve_cmd->parsed()) curve(common, progress, out, err);
    if (report_cmd->parsed()) report(common, runs, want_table1, progress, out);
    if (mem_cmd->parsed()) inspect_memory(memory_run, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return progress.started ? kRuntime : kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    if (progress.started && !common.out_dir.empty()) {
      err << "partial outputs left in " << common.out_dir << "\n";
    }
    return kRuntime;
  }
  return kOk;
}

}  // namespace forgetrace::cli
