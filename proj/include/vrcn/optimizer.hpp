#pragma once

// Epoch-restarted cubic Newton with recursive, moving-average smoothed
// derivative estimates, and the baselines it is compared against.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vrcn/cubic.hpp"
#include "vrcn/estimators.hpp"
#include "vrcn/hutchinson.hpp"
#include "vrcn/problems.hpp"

namespace vrcn {

enum class Regime { NonconvexPlain, Convex, NonconvexProx };
enum class Baseline { FullCRN, SubsampledCRN, SarahGD };

std::string to_string(Regime regime);
std::string to_string(Baseline baseline);
Regime parse_regime(const std::string& name);
Baseline parse_baseline(const std::string& name);

struct ScheduleConstants {
  double C_T = 1.0;
  double C_max = 1.0;
  double C1 = 1.0;
  double C_beta = 1.0;
  double C3 = 1.0;
  double C4 = 1.0;
  double C5 = 1.0;
};

// Read-only view of one subproblem, handed to RunConfig::observer after each solve.
struct StepAudit {
  std::size_t epoch = 0;
  std::size_t t = 0;
  const CubicModel* model = nullptr;
  const SubproblemSolution* solution = nullptr;
  bool accepted = false;
  double theta = 0.0;
};
using StepObserver = std::function<void(const StepAudit&)>;

struct RunConfig {
  double epsilon = 1e-2;
  double c = 0.5;
  // Forces alpha_t to a constant (1 disables smoothing).
  std::optional<double> fixed_alpha;
  double theta = 0.1;
  // Default 2 L2.
  std::optional<double> M;
  // Default ceil(sqrt(n)).
  std::optional<std::size_t> b;
  Sampling sampling = Sampling::WithReplacement;
  // Constant damping of the prox regime.
  double beta = 1.0;
  // Convex regime base damping; may only raise the computed B0.
  std::optional<double> beta0;
  ScheduleConstants constants;
  double prox_epoch_exponent = 0.6;
  // Replace the schedule's epoch count / epoch length.
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> inner;
  // Stop as soon as ||s_t|| <= sqrt(eps / L2). Off runs the full schedule.
  bool step_norm_stop = true;
  std::uint64_t seed = 0;
  std::size_t max_total_iters = 100000;
  HessianBackend backend = HessianBackend::Dense;
  HutchinsonConfig hutchinson;
  SolverConfig solver;
  // Diagnostic full passes per step; counted separately from the algorithm's oracles.
  bool log_F = false;
  bool log_grad_norm = false;
  bool record_wall_clock = false;
  std::optional<Vector> x0;
  std::size_t max_consecutive_floors = 3;
  StepObserver observer;

  void validate() const;
};

// Rounds up, ignoring float noise within 1e-9 relative of an integer.
double ceil_tolerant(double x);

enum class BetaKind { Zero, Constant, Linear };

struct Schedule {
  std::size_t epochs = 1;
  std::size_t inner = 1;
  BetaKind beta_kind = BetaKind::Zero;
  // Constant: beta_t = beta_value; Linear: beta_t = beta_value * (t + 1).
  double beta_value = 0.0;

  double beta(std::size_t t) const;
};

// Throws ConfigError when the convex regime lacks R.
Schedule schedule(Regime regime, std::size_t n, std::size_t b, const RunConfig& config,
                  const ProblemConstants& constants);

struct IterRecord {
  std::size_t epoch = 0;
  std::size_t t = 0;
  std::optional<double> F;
  std::optional<double> grad_norm;
  double step_norm = 0.0;
  double lambda = 0.0;
  double beta_t = 0.0;
  double alpha_t = 0.0;
  std::size_t cg_iters = 0;
  OracleCounter counter;
  double wall_ms = 0.0;
  SolveStatus status = SolveStatus::Converged;
  bool accepted = true;
  double model_value = 0.0;
};

enum class Termination { StepNorm, Budget };
std::string to_string(Termination termination);

struct RunSummary {
  std::string method;
  Vector x;
  // Iterate the final step started from (x_tau); x = x_tau + s_tau.
  Vector x_prev;
  Termination terminated_by = Termination::Budget;
  double final_value = 0.0;
  double final_grad_norm = 0.0;
  double final_lambda_min = 0.0;
  double last_step_norm = 0.0;
  OracleCounter totals;
  std::size_t epochs_started = 0;
  // Recursive (mini-batch difference) updates.
  std::size_t sarah_steps = 0;
  // Subproblem solves, i.e. rows of the trace.
  std::size_t iterations = 0;
  std::size_t rejected_steps = 0;
  std::size_t b = 0;
  double M = 0.0;
  double stop_threshold = 0.0;
  Schedule schedule;
  ProblemConstants constants;
  std::vector<Vector> restart_points;
};

struct RunResult {
  RunSummary summary;
  std::vector<IterRecord> trace;
};

RunResult run(const FiniteSumProblem& problem, Regime regime, const RunConfig& config,
              const ProblemConstants& constants);
RunResult run_baseline(const FiniteSumProblem& problem, Baseline method, const RunConfig& config,
                       const ProblemConstants& constants);

struct AbsorptionReport {
  double ratio = 0.0;
  double threshold = 1.0;
  bool flagged = false;
  std::string formula;
};

// Advisory: plain regime ratio b^(3/4) / T^(9/8) (flagged below threshold),
// prox regime T^(5/2) / b^3 (flagged above threshold). Convex is never flagged.
AbsorptionReport absorption_monitor(Regime regime, std::size_t b, std::size_t T,
                                    double threshold = 1.0);

// Smallest eigenvalue of the full Hessian (dense up to d = 400, Lanczos above).
double hessian_lambda_min(const FiniteSumProblem& problem, std::span<const double> x);

}  // namespace vrcn
