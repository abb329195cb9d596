// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "forgetrace/metrics.hpp"

namespace forgetrace {

// Per-seed final rows followed by their mean (phase "mean", seed -1).
// Per-type cells are averaged over the seeds that report the type.
MetricReport mean_row(std::span<const MetricReport> finals);
void write_summary_csv(const std::filesystem::path& path, std::span<const MetricReport> finals);

// The row a run directory reports: the mean row of summary.csv when present,
// else the last non-aborted row of metrics.csv.
MetricReport headline_row(const std::filesystem::path& run_dir);

struct Table1Row {
  std::string strategy;
  double ppl_ent = 0.0;
  double mf_ent = 0.0;
  double m_ex = 0.0;
  double m_in = 0.0;
  std::string run;
};

std::vector<Table1Row> table1(std::span<const std::filesystem::path> run_dirs);
std::string table1_csv(std::span<const Table1Row> rows);

// Copies <run>/curves/*.csv to <out>/curves/<run name>_<file>. Returns the
// paths written.
std::vector<std::filesystem::path> export_curves(std::span<const std::filesystem::path> run_dirs,
                                                 const std::filesystem::path& out_dir);

}  // namespace forgetrace
