#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "vrcn/errors.hpp"
#include "vrcn/harness/experiments.hpp"

using namespace vrcn;

namespace {

std::size_t data_rows(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::size_t rows = 0;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    ++rows;
  }
  return rows;
}

const char* kSmall = R"(
[problem]
kind = nonconvex_logistic
n = 60
d = 4
seed = 3

[run]
methods = vrcn_nonconvex
seed = 11
max_total_iters = 40

[sweep]
epsilons = 1e-1, 3e-2, 1e-2
seed_count = 5
)";

}  // namespace

TEST_CASE("config parsing and rejection") {
  const ExperimentConfig c = parse_config(kSmall);
  CHECK(c.problem.kind == "nonconvex_logistic");
  CHECK(c.problem.n == 60);
  CHECK(c.master_seed == 11);
  CHECK(c.sweep.epsilons.size() == 3);
  CHECK(c.sweep.seeds.size() == 5);

  try {
    parse_config("[run]\nepsilon = 0.1\nbogus = 3\n");
    FAIL("accepted an unknown key");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("[run] bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("[nope]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run]\nepsilon = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run]\nmethods = vrcn_foo\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run]\nepsilon = -1\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.ini"), ConfigError);
}

TEST_CASE("config hash tracks every field") {
  ExperimentConfig a = parse_config(kSmall);
  ExperimentConfig b = parse_config(kSmall);
  CHECK(config_hash(a) == config_hash(b));
  b.run.log_F = true;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.master_seed = 12;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(255) == "00000000000000ff");
}

TEST_CASE("method names") {
  CHECK(parse_method("vrcn_convex").regime == Regime::Convex);
  CHECK(parse_method("vrcn_nonconvex_prox").regime == Regime::NonconvexProx);
  CHECK(parse_method("sarah_gd").baseline);
  CHECK(parse_method("full_crn").method == Baseline::FullCRN);
  CHECK_THROWS_AS(parse_method("newton"), ConfigError);
}

TEST_CASE("sweep of 3 eps x 5 seeds gives 15 summary rows, trace rows match iterations") {
  const ExperimentConfig c = parse_config(kSmall);
  const Experiment e = prepare_experiment(c);
  const std::vector<Cell> cells = expand_cells(c);
  REQUIRE(cells.size() == 15);
  CHECK(cells[14].run_id == "run0014");
  const std::vector<CellResult> rs = execute_cells(e, cells, 4);

  std::ostringstream summary, trace;
  write_summary_csv(summary, e, rs);
  write_trace_csv(trace, e, rs);
  CHECK(data_rows(summary.str()) == 15);
  std::size_t iters = 0;
  for (const CellResult& r : rs) iters += r.result.summary.iterations;
  CHECK(data_rows(trace.str()) == iters);
  CHECK(trace.str().rfind("# config_hash=" + hex64(e.hash) + " master_seed=11\n", 0) == 0);

  const nlohmann::json j = nlohmann::json::parse(summary_json(e, rs[0]));
  CHECK(j["config_hash"] == hex64(e.hash));
  CHECK(j["master_seed"] == 11);
  CHECK(j["iterations"] == rs[0].result.summary.iterations);
}

TEST_CASE("reruns are bitwise identical regardless of worker count") {
  const ExperimentConfig c = parse_config(kSmall);
  const Experiment e = prepare_experiment(c);
  const std::vector<Cell> cells = expand_cells(c);
  std::ostringstream a, b;
  write_trace_csv(a, e, execute_cells(e, cells, 1));
  write_trace_csv(b, e, execute_cells(e, cells, 7));
  CHECK(a.str() == b.str());
}

TEST_CASE("scaling report") {
  ExperimentConfig c = parse_config(kSmall);
  c.sweep.seeds = {0, 1};
  Experiment e = prepare_experiment(c);
  std::vector<CellResult> rs = execute_cells(e, expand_cells(c), 0);
  std::vector<ScalingRow> rows = scaling_report(rs, 60);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].points == 3);
  CHECK(rows[0].error == "insufficient points");

  // Degenerate series: four runs at one eps.
  c.sweep.epsilons = {0.05};
  c.sweep.seeds = {0, 1, 2, 3};
  e = prepare_experiment(c);
  rs = execute_cells(e, expand_cells(c), 0);
  rows = scaling_report(rs, 60);
  CHECK(rows[0].error == "insufficient points");

  c.sweep.epsilons = {0.02, 0.01, 0.005, 0.0025};
  c.sweep.seeds = {0};
  c.methods = {"vrcn_nonconvex", "full_crn"};
  e = prepare_experiment(c);
  rs = execute_cells(e, expand_cells(c), 0);
  rows = scaling_report(rs, 60);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].method == "full_crn");
  for (const ScalingRow& r : rows) {
    CHECK(r.points == 4);
    CHECK(r.error.empty());
    CHECK(r.iterations.points == 4);
  }
  CHECK(std::isfinite(rows[0].oracles.slope));
}

TEST_CASE("huge eps stops after one step") {
  ExperimentConfig c = parse_config("[problem]\nkind = double_well\nn = 16\nd = 3\n[run]\nepsilon = 1e6\n");
  const Experiment e = prepare_experiment(c);
  const std::vector<CellResult> rs = execute_cells(e, expand_cells(c), 1);
  REQUIRE(rs.size() == 1);
  CHECK(rs[0].result.summary.iterations == 1);
  CHECK(rs[0].result.summary.terminated_by == Termination::StepNorm);
}

TEST_CASE("outputs on disk and dataset generation") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "vrcn_test_harness";
  fs::remove_all(dir);
  ExperimentConfig c = parse_config(kSmall);
  c.sweep.seeds = {0, 1};
  c.methods = {"vrcn_nonconvex", "sarah_gd"};
  const Experiment e = prepare_experiment(c);
  const std::vector<CellResult> rs = execute_cells(e, expand_cells(c), 0);
  const auto files = write_outputs(e, rs, dir, OutputOptions{true, true});
  CHECK(files.size() == 2 + rs.size() + 2);
  CHECK(fs::exists(dir / "runs" / "run0011.json"));
  const std::vector<CompareRow> cmp = compare_rows(rs);
  REQUIRE(cmp.size() == 2);
  CHECK(cmp[0].runs == 6);
  CHECK(compare_table(cmp).find("sarah_gd") != std::string::npos);

  const auto data = generate_dataset(c, dir / "data");
  REQUIRE(data.size() == 2);
  ExperimentConfig lib = c;
  lib.problem.kind = "libsvm_nonconvex";
  lib.problem.path = data[0].string();
  const ProblemPtr loaded = build_problem(lib.problem);
  const ProblemPtr direct = build_problem(c.problem);
  CHECK(loaded->n() == direct->n());
  CHECK(loaded->d() == direct->d());
  const Vector x(4, 0.3);
  CHECK(loaded->full_value(x) == doctest::Approx(direct->full_value(x)).epsilon(1e-12));
  fs::remove_all(dir);
}
