// Experiment orchestration: chapter front ends driven by a flat config
// document, Monte Carlo sweeps across seeds with a bounded worker pool, and
// round-trip-exact CSV reports.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"

namespace ranopt {

// One chapter run under one config. `results_csv` is the document the CLI
// writes to --out (the iteration trace for ch3, result tables for ch4/ch8);
// `trace_csv` carries the ch8 convergence trace and is empty elsewhere.
// `metrics` lists the scalar summary in a fixed per-chapter order.
struct ChapterRun {
  std::vector<std::pair<std::string, double>> metrics;
  std::string results_csv;
  std::string trace_csv;
};

// Dispatches on the `chapter` key (ch3 | ch4 | ch8). Chapter selectors are
// plain keys too: `puf` for ch3, `mode` for ch4, `method` for ch8. Topology,
// radio, and solver parameters all come from the same document; `seed` picks
// the Monte Carlo draw. Throws std::invalid_argument on unknown selectors
// and propagates solver errors.
ChapterRun run_chapter(const Config& cfg);

// Worker count for seed-level parallelism: RANOPT_THREADS when set (must be
// a positive integer), otherwise the hardware concurrency.
std::size_t worker_count();

struct ExperimentSpec {
  std::string chapter;               // ch3 | ch4 | ch8
  std::string sweep_var;             // config key rebound per sweep value
  std::vector<double> sweep_values;  // non-empty
  std::vector<std::uint64_t> seeds;  // non-empty, distinct
  Config params;                     // everything else the chapter reads

  // Reads chapter, sweep_var, sweep_values, seeds from the document and
  // keeps the rest as chapter parameters.
  static ExperimentSpec from_config(const Config& cfg);
};

void validate_spec(const ExperimentSpec& spec);

struct ExperimentRow {
  double sweep = 0.0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

struct ExperimentAggregate {
  double sweep = 0.0;
  std::string metric;
  double value = 0.0;  // arithmetic mean over seeds
};

struct ExperimentReport {
  std::vector<ExperimentRow> rows;             // (sweep, seed, metric) order
  std::vector<ExperimentAggregate> aggregates;  // (sweep, metric) order
};

// Runs sweep x seeds chapter evaluations on the worker pool. Rows come back
// in deterministic (sweep, seed, metric) order no matter how workers
// interleave; any task error is rethrown with its (sweep, seed) context.
ExperimentReport run_experiment(const ExperimentSpec& spec);

// Report document: header `sweep,seed,metric,value`, one record per row,
// aggregate rows keyed by the literal seed `mean`, doubles printed so that
// parsing recovers the exact value.
std::string report_to_csv(const ExperimentReport& report);
void emit_csv(const ExperimentReport& report, const std::string& path);
ExperimentReport report_from_csv(const std::string& text);

// Full sweep entry point shared by the CLI and the C API: parses the spec
// document, runs it, and writes report.csv under out_dir (created if absent).
void run_sweep_to_dir(const Config& spec_cfg, const std::string& out_dir);

}  // namespace ranopt
