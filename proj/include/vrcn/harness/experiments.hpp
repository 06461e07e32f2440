#pragma once

// Experiment cells (method x eps x b x seed), concurrent execution with
// index-ordered results, trace/summary emission and scaling fits.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vrcn/harness/config.hpp"
#include "vrcn/stats.hpp"

namespace vrcn {

struct Cell {
  std::size_t index = 0;
  std::string run_id;
  MethodSpec method;
  double epsilon = 0.0;
  std::optional<std::size_t> b;
  std::uint64_t seed_label = 0;
  // derive_seed(master_seed, seed_label); shared across methods so that a
  // seed label means the same x0 for every method.
  std::uint64_t run_seed = 0;
};

struct CellResult {
  Cell cell;
  RunResult result;
};

struct Experiment {
  ExperimentConfig config;
  ProblemPtr problem;
  ProblemConstants constants;
  std::uint64_t hash = 0;
};

Experiment prepare_experiment(const ExperimentConfig& config);

// Order: method, then epsilon, then b, then seed. Empty axes fall back to the
// [run] value (epsilon, b) or the single seed label 0.
std::vector<Cell> expand_cells(const ExperimentConfig& config);

Vector initial_point(const X0Spec& spec, std::size_t d, std::uint64_t run_seed);

// Runs cells on up to `workers` threads (0 = hardware concurrency); the
// result vector is in cell order regardless of completion order.
std::vector<CellResult> execute_cells(const Experiment& experiment, std::span<const Cell> cells,
                                      std::size_t workers, const StepObserver& observer = {});

std::string header_comment(const Experiment& experiment);

// Fixed per-iteration columns; one row per trace record.
void write_trace_csv(std::ostream& out, const Experiment& experiment, std::span<const CellResult> results);
void write_summary_csv(std::ostream& out, const Experiment& experiment, std::span<const CellResult> results);
std::string summary_json(const Experiment& experiment, const CellResult& result);

struct ScalingRow {
  std::string method;
  std::string b;
  std::size_t points = 0;
  // Mean inner iterations vs eps.
  LineFit iterations;
  // Mean (grad_paper - n * epochs) vs eps; NaN slope
  // when some mean is zero.
  LineFit oracles;
  std::string error;
};

// One row per (method, b) series; series with fewer than 4 distinct eps get
// error "insufficient points".
std::vector<ScalingRow> scaling_report(std::span<const CellResult> results, std::size_t n);
void write_scaling_csv(std::ostream& out, const Experiment& experiment, std::span<const ScalingRow> rows);

// Per-method means over cells: final F, oracle totals, iterations.
struct CompareRow {
  std::string method;
  std::size_t runs = 0;
  double final_F = 0.0;
  double final_grad_norm = 0.0;
  double iterations = 0.0;
  double grad_oracles_paper = 0.0;
  double hess_oracles_paper = 0.0;
  double grad_oracles_raw = 0.0;
  double hess_oracles_raw = 0.0;
};

std::vector<CompareRow> compare_rows(std::span<const CellResult> results);
void write_compare_csv(std::ostream& out, const Experiment& experiment, std::span<const CompareRow> rows);
std::string compare_table(std::span<const CompareRow> rows);

// trace.csv, summary.csv, runs/<run_id>.json, plus scaling.csv / compare.csv
// when requested. Returns the paths written.
struct OutputOptions {
  bool scaling = false;
  bool compare = false;
};
std::vector<std::filesystem::path> write_outputs(const Experiment& experiment, std::span<const CellResult> results,
                                                 const std::filesystem::path& dir, const OutputOptions& options);

// Classification data of the [problem] spec as LIBSVM plus a JSON record of
// the generating seed.
std::vector<std::filesystem::path> generate_dataset(const ExperimentConfig& config, const std::filesystem::path& dir);

}  // namespace vrcn
