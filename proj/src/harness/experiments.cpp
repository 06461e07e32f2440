#include "vrcn/harness/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "vrcn/errors.hpp"
#include "vrcn/libsvm.hpp"
#include "vrcn/rng.hpp"

namespace vrcn {

namespace {

std::string num(double v) { return fmt::format("{}", v); }

std::string b_label(const std::optional<std::size_t>& b) { return b ? fmt::format("{}", *b) : "default"; }

void check_stream(const std::ofstream& out, const std::filesystem::path& path) {
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

}  // namespace

Experiment prepare_experiment(const ExperimentConfig& config) {
  Experiment e;
  e.config = config;
  e.problem = build_problem(config.problem);
  e.constants = problem_constants(config.problem, *e.problem);
  e.hash = config_hash(config);
  return e;
}

std::vector<Cell> expand_cells(const ExperimentConfig& config) {
  std::vector<double> eps = config.sweep.epsilons;
  if (eps.empty()) eps.push_back(config.run.epsilon);
  std::vector<std::optional<std::size_t>> bs;
  for (std::size_t b : config.sweep.batch_sizes) bs.emplace_back(b);
  if (bs.empty()) bs.push_back(config.run.b);
  std::vector<std::uint64_t> seeds = config.sweep.seeds;
  if (seeds.empty()) seeds.push_back(0);

  std::vector<Cell> cells;
  for (const std::string& m : config.methods) {
    const MethodSpec spec = parse_method(m);
    for (double e : eps) {
      for (const auto& b : bs) {
        for (std::uint64_t s : seeds) {
          Cell c;
          c.index = cells.size();
          c.run_id = fmt::format("run{:04d}", c.index);
          c.method = spec;
          c.epsilon = e;
          c.b = b;
          c.seed_label = s;
          c.run_seed = derive_seed(config.master_seed, s);
          cells.push_back(std::move(c));
        }
      }
    }
  }
  return cells;
}

Vector initial_point(const X0Spec& spec, std::size_t d, std::uint64_t run_seed) {
  if (spec.kind == "zero") return Vector(d);
  if (spec.kind == "constant") return Vector(d, spec.value);
  if (spec.kind == "gaussian") {
    std::mt19937_64 rng(derive_seed(run_seed, 3));
    std::normal_distribution<double> nd;
    Vector x(d);
    for (double& v : x) v = spec.scale * nd(rng);
    return x;
  }
  throw ConfigError("[run] x0: unknown kind '" + spec.kind + "'");
}

std::vector<CellResult> execute_cells(const Experiment& experiment, std::span<const Cell> cells,
                                      std::size_t workers, const StepObserver& observer) {
  std::vector<CellResult> out(cells.size());
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(cells.size(), 1));

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(cells.size());
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
      const Cell& c = cells[i];
      try {
        RunConfig cfg = experiment.config.run;
        cfg.epsilon = c.epsilon;
        cfg.b = c.b;
        cfg.seed = c.run_seed;
        cfg.x0 = initial_point(experiment.config.x0, experiment.problem->d(), c.run_seed);
        cfg.observer = observer;
        out[i].cell = c;
        out[i].result = c.method.baseline ? run_baseline(*experiment.problem, c.method.method, cfg, experiment.constants)
                                          : run(*experiment.problem, c.method.regime, cfg, experiment.constants);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::string header_comment(const Experiment& experiment) {
  return fmt::format("# config_hash={} master_seed={}\n", hex64(experiment.hash), experiment.config.master_seed);
}

void write_trace_csv(std::ostream& out, const Experiment& experiment, std::span<const CellResult> results) {
  out << header_comment(experiment);
  out << "run_id,method,epoch,t,F,grad_norm,step_norm,lambda,beta_t,alpha_t,cg_iters,grad_oracles_raw,"
         "hess_oracles_raw,grad_oracles_paper,hess_oracles_paper,wall_ms\n";
  for (const CellResult& r : results) {
    for (const IterRecord& rec : r.result.trace) {
      out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.cell.run_id, r.cell.method.name,
                         rec.epoch, rec.t, rec.F ? num(*rec.F) : "", rec.grad_norm ? num(*rec.grad_norm) : "",
                         num(rec.step_norm), num(rec.lambda), num(rec.beta_t), num(rec.alpha_t), rec.cg_iters,
                         rec.counter.grad_raw, rec.counter.hess_raw, rec.counter.grad_paper, rec.counter.hess_paper,
                         num(rec.wall_ms));
    }
  }
}

void write_summary_csv(std::ostream& out, const Experiment& experiment, std::span<const CellResult> results) {
  out << header_comment(experiment);
  out << "run_id,method,epsilon,b,seed,terminated_by,iterations,sarah_steps,epochs_started,rejected_steps,"
         "final_F,final_grad_norm,final_lambda_min,grad_oracles_raw,hess_oracles_raw,grad_oracles_paper,"
         "hess_oracles_paper\n";
  for (const CellResult& r : results) {
    const RunSummary& s = r.result.summary;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.cell.run_id, r.cell.method.name,
                       num(r.cell.epsilon), s.b, r.cell.seed_label, to_string(s.terminated_by), s.iterations,
                       s.sarah_steps, s.epochs_started, s.rejected_steps, num(s.final_value), num(s.final_grad_norm),
                       num(s.final_lambda_min), s.totals.grad_raw, s.totals.hess_raw, s.totals.grad_paper,
                       s.totals.hess_paper);
  }
}

std::string summary_json(const Experiment& experiment, const CellResult& r) {
  const RunSummary& s = r.result.summary;
  nlohmann::ordered_json j;
  j["config_hash"] = hex64(experiment.hash);
  j["master_seed"] = experiment.config.master_seed;
  j["run_id"] = r.cell.run_id;
  j["method"] = r.cell.method.name;
  j["epsilon"] = r.cell.epsilon;
  j["seed"] = r.cell.seed_label;
  j["run_seed"] = r.cell.run_seed;
  j["b"] = s.b;
  j["M"] = s.M;
  j["stop_threshold"] = s.stop_threshold;
  j["schedule"] = {{"epochs", s.schedule.epochs}, {"inner", s.schedule.inner}, {"beta_value", s.schedule.beta_value}};
  j["constants"] = {{"L2", s.constants.L2}, {"LH", s.constants.LH}, {"sigma1", s.constants.sigma1},
                    {"sigma2", s.constants.sigma2}};
  j["terminated_by"] = to_string(s.terminated_by);
  j["iterations"] = s.iterations;
  j["sarah_steps"] = s.sarah_steps;
  j["epochs_started"] = s.epochs_started;
  j["rejected_steps"] = s.rejected_steps;
  j["final_F"] = s.final_value;
  j["final_grad_norm"] = s.final_grad_norm;
  j["final_lambda_min"] = s.final_lambda_min;
  j["last_step_norm"] = s.last_step_norm;
  j["oracles"] = {{"grad_raw", s.totals.grad_raw},
                  {"hess_raw", s.totals.hess_raw},
                  {"grad_paper", s.totals.grad_paper},
                  {"hess_paper", s.totals.hess_paper},
                  {"hvp_raw", s.totals.hvp_raw},
                  {"diagnostic_value", s.totals.diagnostic_value},
                  {"diagnostic_grad", s.totals.diagnostic_grad},
                  {"diagnostic_hess", s.totals.diagnostic_hess}};
  j["x"] = s.x.values();
  return j.dump(2) + "\n";
}

std::vector<ScalingRow> scaling_report(std::span<const CellResult> results, std::size_t n) {
  // series -> eps -> samples
  struct Acc {
    std::vector<double> iters;
    std::vector<double> oracles;
  };
  std::map<std::pair<std::string, std::string>, std::map<double, Acc>> series;
  std::vector<std::pair<std::string, std::string>> order;
  for (const CellResult& r : results) {
    const auto key = std::make_pair(r.cell.method.name, b_label(r.cell.b));
    if (!series.contains(key)) order.push_back(key);
    Acc& a = series[key][r.cell.epsilon];
    const RunSummary& s = r.result.summary;
    a.iters.push_back(static_cast<double>(s.iterations));
    a.oracles.push_back(static_cast<double>(s.totals.grad_paper) - static_cast<double>(n * s.epochs_started));
  }
  std::vector<ScalingRow> rows;
  for (const auto& key : order) {
    ScalingRow row;
    row.method = key.first;
    row.b = key.second;
    std::vector<double> eps, it, orc;
    for (const auto& [e, a] : series[key]) {
      eps.push_back(e);
      it.push_back(mean_std(a.iters).mean);
      orc.push_back(mean_std(a.oracles).mean);
    }
    row.points = eps.size();
    if (eps.size() < 4) {
      row.error = "insufficient points";
    } else {
      try {
        row.iterations = fit_loglog(eps, it);
      } catch (const std::exception& ex) {
        row.error = ex.what();
      }
      // Full-pass methods spend nothing beyond n per epoch.
      if (std::all_of(orc.begin(), orc.end(), [](double v) { return v > 0.0; })) {
        row.oracles = fit_loglog(eps, orc);
      } else {
        row.oracles.slope = row.oracles.slope_stderr = std::nan("");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_scaling_csv(std::ostream& out, const Experiment& experiment, std::span<const ScalingRow> rows) {
  out << header_comment(experiment);
  out << "method,b,points,iter_slope,iter_slope_stderr,oracle_slope,oracle_slope_stderr,error\n";
  for (const ScalingRow& r : rows) {
    if (r.error.empty()) {
      out << fmt::format("{},{},{},{},{},{},{},\n", r.method, r.b, r.points, num(r.iterations.slope),
                         num(r.iterations.slope_stderr), num(r.oracles.slope), num(r.oracles.slope_stderr));
    } else {
      out << fmt::format("{},{},{},,,,,{}\n", r.method, r.b, r.points, r.error);
    }
  }
}

std::vector<CompareRow> compare_rows(std::span<const CellResult> results) {
  std::vector<CompareRow> rows;
  for (const CellResult& r : results) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const CompareRow& c) { return c.method == r.cell.method.name; });
    if (it == rows.end()) {
      rows.push_back(CompareRow{r.cell.method.name});
      it = rows.end() - 1;
    }
    const RunSummary& s = r.result.summary;
    ++it->runs;
    it->final_F += s.final_value;
    it->final_grad_norm += s.final_grad_norm;
    it->iterations += static_cast<double>(s.iterations);
    it->grad_oracles_paper += static_cast<double>(s.totals.grad_paper);
    it->hess_oracles_paper += static_cast<double>(s.totals.hess_paper);
    it->grad_oracles_raw += static_cast<double>(s.totals.grad_raw);
    it->hess_oracles_raw += static_cast<double>(s.totals.hess_raw);
  }
  for (CompareRow& c : rows) {
    const double k = static_cast<double>(c.runs);
    c.final_F /= k;
    c.final_grad_norm /= k;
    c.iterations /= k;
    c.grad_oracles_paper /= k;
    c.hess_oracles_paper /= k;
    c.grad_oracles_raw /= k;
    c.hess_oracles_raw /= k;
  }
  return rows;
}

void write_compare_csv(std::ostream& out, const Experiment& experiment, std::span<const CompareRow> rows) {
  out << header_comment(experiment);
  out << "method,runs,final_F,final_grad_norm,iterations,grad_oracles_paper,hess_oracles_paper,grad_oracles_raw,"
         "hess_oracles_raw\n";
  for (const CompareRow& c : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", c.method, c.runs, num(c.final_F), num(c.final_grad_norm),
                       num(c.iterations), num(c.grad_oracles_paper), num(c.hess_oracles_paper),
                       num(c.grad_oracles_raw), num(c.hess_oracles_raw));
  }
}

std::string compare_table(std::span<const CompareRow> rows) {
  std::string out = fmt::format("{:<22} {:>5} {:>14} {:>12} {:>10} {:>12} {:>12}\n", "method", "runs", "final F",
                                "|grad F|", "iters", "grad (paper)", "hess (paper)");
  for (const CompareRow& c : rows) {
    out += fmt::format("{:<22} {:>5} {:>14.8g} {:>12.4g} {:>10.1f} {:>12.0f} {:>12.0f}\n", c.method, c.runs, c.final_F,
                       c.final_grad_norm, c.iterations, c.grad_oracles_paper, c.hess_oracles_paper);
  }
  return out;
}

std::vector<std::filesystem::path> write_outputs(const Experiment& experiment, std::span<const CellResult> results,
                                                 const std::filesystem::path& dir, const OutputOptions& options) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "runs");
  std::vector<fs::path> written;
  auto emit = [&](const fs::path& p, auto&& body) {
    std::ofstream out(p, std::ios::binary);
    check_stream(out, p);
    body(out);
    out.flush();
    check_stream(out, p);
    written.push_back(p);
  };
  emit(dir / "trace.csv", [&](std::ostream& o) { write_trace_csv(o, experiment, results); });
  emit(dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, experiment, results); });
  for (const CellResult& r : results) {
    emit(dir / "runs" / (r.cell.run_id + ".json"), [&](std::ostream& o) { o << summary_json(experiment, r); });
  }
  if (options.scaling) {
    const std::vector<ScalingRow> rows = scaling_report(results, experiment.problem->n());
    emit(dir / "scaling.csv", [&](std::ostream& o) { write_scaling_csv(o, experiment, rows); });
  }
  if (options.compare) {
    const std::vector<CompareRow> rows = compare_rows(results);
    emit(dir / "compare.csv", [&](std::ostream& o) { write_compare_csv(o, experiment, rows); });
  }
  return written;
}

std::vector<std::filesystem::path> generate_dataset(const ExperimentConfig& config, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const ProblemSpec& p = config.problem;
  fs::create_directories(dir);
  const Dataset data = make_classification_dataset(p.n, p.d, p.flip, p.seed);
  const fs::path lib = dir / "dataset.libsvm";
  save_libsvm(lib.string(), data);
  nlohmann::ordered_json j;
  j["config_hash"] = hex64(config_hash(config));
  j["master_seed"] = config.master_seed;
  j["generator"] = "classification";
  j["seed"] = p.seed;
  j["n"] = p.n;
  j["d"] = p.d;
  j["flip"] = p.flip;
  j["file"] = lib.filename().string();
  const fs::path meta = dir / "dataset.json";
  std::ofstream out(meta, std::ios::binary);
  check_stream(out, meta);
  out << j.dump(2) << "\n";
  return {lib, meta};
}

}  // namespace vrcn
