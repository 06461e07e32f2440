#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "vrcn/errors.hpp"
#include "vrcn/harness/experiments.hpp"
#include "vrcn/verification.hpp"

namespace {

using namespace vrcn;

struct Common {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> log_F;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "INI experiment file");
  if (config_required) opt->required();
  cmd->add_option("--out", c.out, "Output directory (overrides [output] dir)");
  cmd->add_option("--seed", c.seed, "Master seed (overrides [run] seed)");
  cmd->add_option("--workers", c.workers, "Concurrent runs (0 = all cores)");
  cmd->add_option("--log-F", c.log_F, "Log F per iteration")->check(CLI::IsMember({"on", "off"}));
}

ExperimentConfig load(const Common& c) {
  if (!std::filesystem::exists(c.config)) throw ConfigError("config file not found: " + c.config);
  ExperimentConfig cfg = load_config(c.config);
  if (c.out) cfg.out_dir = *c.out;
  if (c.seed) cfg.master_seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;
  if (c.log_F) cfg.run.log_F = *c.log_F == "on";
  return cfg;
}

int do_experiment(const Common& c, const OutputOptions& options) {
  const ExperimentConfig cfg = load(c);
  const Experiment e = prepare_experiment(cfg);
  const std::vector<Cell> cells = expand_cells(cfg);
  spdlog::info("{} run(s), config_hash={} master_seed={}", cells.size(), hex64(e.hash), cfg.master_seed);
  const std::vector<CellResult> rs = execute_cells(e, cells, cfg.workers);
  const auto files = write_outputs(e, rs, cfg.out_dir, options);

  if (options.compare) {
    std::cout << compare_table(compare_rows(rs));
  } else if (options.scaling) {
    for (const ScalingRow& r : scaling_report(rs, e.problem->n())) {
      if (r.error.empty()) {
        std::cout << fmt::format("{:<22} b={:<8} iterations slope {:+.3f} +- {:.3f}   oracles slope {:+.3f} +- {:.3f}\n",
                                 r.method, r.b, r.iterations.slope, r.iterations.slope_stderr, r.oracles.slope,
                                 r.oracles.slope_stderr);
      } else {
        std::cout << fmt::format("{:<22} b={:<8} {} ({} eps point(s))\n", r.method, r.b, r.error, r.points);
      }
    }
  } else {
    for (const CellResult& r : rs) {
      const RunSummary& s = r.result.summary;
      std::cout << fmt::format("{} {} eps={} iterations={} F={:.10g} |grad F|={:.3g} lambda_min={:.3g} ({})\n",
                               r.cell.run_id, r.cell.method.name, r.cell.epsilon, s.iterations, s.final_value,
                               s.final_grad_norm, s.final_lambda_min, to_string(s.terminated_by));
    }
  }
  std::cout << fmt::format("wrote {} file(s) to {}\n", files.size(), cfg.out_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variance-reduced stochastic cubic Newton: experiments and checks"};
  app.require_subcommand(1);

  Common run_opts, cmp_opts, sweep_opts, gen_opts;
  auto* run_cmd = app.add_subcommand("run", "Run the configured experiment");
  add_common(run_cmd, run_opts);
  auto* cmp_cmd = app.add_subcommand("compare", "Run every configured method and tabulate them");
  add_common(cmp_cmd, cmp_opts);
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid over eps / seeds / b with scaling fits");
  add_common(sweep_cmd, sweep_opts);
  auto* gen_cmd = app.add_subcommand("gen-data", "Write the configured synthetic dataset as LIBSVM");
  add_common(gen_cmd, gen_opts);

  auto* verify_cmd = app.add_subcommand("verify", "Run the verification suite");
  std::uint64_t verify_seed = SuiteOptions{}.seed;
  std::optional<std::string> verify_out;
  bool quick = false;
  verify_cmd->add_option("--seed", verify_seed, "Suite seed");
  verify_cmd->add_option("--out", verify_out, "Write results.json here");
  verify_cmd->add_flag("--quick", quick, "Skip the termination runs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return do_experiment(run_opts, {});
    if (*cmp_cmd) return do_experiment(cmp_opts, OutputOptions{false, true});
    if (*sweep_cmd) return do_experiment(sweep_opts, OutputOptions{true, false});
    if (*gen_cmd) {
      const ExperimentConfig cfg = load(gen_opts);
      for (const auto& p : generate_dataset(cfg, cfg.out_dir)) std::cout << "wrote " << p.string() << "\n";
      return 0;
    }
    if (*verify_cmd) {
      SuiteOptions opt;
      opt.seed = verify_seed;
      opt.run_sosp = !quick;
      const std::vector<CheckResult> rs = run_verification_suite(opt);
      std::cout << results_table(rs);
      if (verify_out) {
        std::filesystem::create_directories(*verify_out);
        std::ofstream(std::filesystem::path(*verify_out) / "results.json") << results_json(rs);
      }
      for (const CheckResult& r : rs) {
        if (!r.passed) return 3;
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
