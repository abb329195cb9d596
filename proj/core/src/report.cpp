// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include "forgetrace/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "forgetrace/error.hpp"
#include "forgetrace/run_config.hpp"

namespace forgetrace {

MetricReport mean_row(std::span<const MetricReport> finals) {
  if (finals.empty()) throw Error("no rows to average");
  MetricReport m;
  m.phase = "mean";
  m.seed = -1;
  std::map<EntityType, std::size_t> type_count;
  for (const auto& r : finals) {
    m.step = std::max(m.step, r.step);
    m.tokens_seen = std::max(m.tokens_seen, r.tokens_seen);
    m.ppl += r.ppl;
    m.mf += r.mf;
    m.m_in += r.m_in;
    m.m_ex += r.m_ex;
    m.n_items += r.n_items;
    for (const auto& [type, t] : r.per_type) {
      auto& acc = m.per_type[type];
      acc.ppl += t.ppl;
      acc.mf += t.mf;
      acc.m_in += t.m_in;
      acc.m_ex += t.m_ex;
      acc.n_items += t.n_items;
      ++type_count[type];
    }
  }
  const double n = static_cast<double>(finals.size());
  m.ppl /= n;
  m.mf /= n;
  m.m_in /= n;
  m.m_ex /= n;
  m.n_items /= finals.size();
  for (auto& [type, t] : m.per_type) {
    const auto c = type_count[type];
    t.ppl /= static_cast<double>(c);
    t.mf /= static_cast<double>(c);
    t.m_in /= static_cast<double>(c);
    t.m_ex /= static_cast<double>(c);
    t.n_items /= c;
  }
  return m;
}

void write_summary_csv(const std::filesystem::path& path, std::span<const MetricReport> finals) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << metrics_csv_header() << '\n';
  for (const auto& r : finals) out << metrics_csv_row(r) << '\n';
  out << metrics_csv_row(mean_row(finals)) << '\n';
}

MetricReport headline_row(const std::filesystem::path& run_dir) {
  const auto summary = run_dir / "summary.csv";
  if (std::filesystem::exists(summary)) {
    for (const auto& r : read_metrics_csv(summary)) {
      if (r.phase == "mean") return r;
    }
  }
  const auto metrics = run_dir / "metrics.csv";
  if (!std::filesystem::exists(metrics)) {
    throw Error("no metrics.csv or summary.csv in " + run_dir.string());
  }
  const auto rows = read_metrics_csv(metrics);
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (it->phase != "aborted") return *it;
  }
  throw Error("no completed rows in " + metrics.string());
}

namespace {

std::string run_name(const std::filesystem::path& dir) {
  auto p = dir;
  if (!p.has_filename()) p = p.parent_path();
  return p.filename().string();
}

std::string run_strategy_name(const std::filesystem::path& dir) {
  for (const auto& candidate : {dir / "config.cfg"}) {
    if (std::filesystem::exists(candidate)) {
      return std::string(to_string(load_run_config(candidate).strategy));
    }
  }
  throw Error("no config.cfg in " + dir.string());
}

}  // namespace

std::vector<Table1Row> table1(std::span<const std::filesystem::path> run_dirs) {
  std::vector<Table1Row> rows;
  for (const auto& dir : run_dirs) {
    const MetricReport r = headline_row(dir);
    rows.push_back({run_strategy_name(dir), r.ppl, r.mf, r.m_ex, r.m_in, run_name(dir)});
  }
  return rows;
}

std::string table1_csv(std::span<const Table1Row> rows) {
  std::string out = "strategy,ppl_ent,mf_ent,m_ex,m_in,run\n";
  for (const auto& r : rows) {
    out += r.strategy + "," + format_real(r.ppl_ent) + "," + format_real(r.mf_ent) + "," +
           format_real(r.m_ex) + "," + format_real(r.m_in) + "," + r.run + "\n";
  }
  return out;
}

std::vector<std::filesystem::path> export_curves(std::span<const std::filesystem::path> run_dirs,
                                                 const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> written;
  for (const auto& dir : run_dirs) {
    const auto curves = dir / "curves";
    if (!std::filesystem::is_directory(curves)) continue;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(curves)) {
      if (entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) continue;
    std::filesystem::create_directories(out_dir / "curves");
    for (const auto& f : files) {
      const auto target = out_dir / "curves" / (run_name(dir) + "_" + f.filename().string());
      std::filesystem::copy_file(f, target, std::filesystem::copy_options::overwrite_existing);
      written.push_back(target);
    }
  }
  return written;
}

}  // namespace forgetrace
