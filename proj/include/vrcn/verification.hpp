#pragma once

// Executable checks of the analysis: model identity and bounds, moving-average
// weights, estimator variance and unbiasedness, one-step descent, termination
// quality, inexactness and oracle accounting.

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vrcn/cubic.hpp"
#include "vrcn/optimizer.hpp"
#include "vrcn/problems.hpp"

namespace vrcn {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::vector<double> measured;
  std::vector<double> bound;
  std::string details;
  double seconds = 0.0;
};

// Q diag(spectrum) Q^T with a random orthogonal Q.
Matrix random_symmetric_with_spectrum(std::mt19937_64& rng, std::span<const double> spectrum);
// Gaussian g, spectrum uniform in [-3, 3] (indefinite), M uniform in [0.5, 4].
CubicModel random_cubic_model(std::mt19937_64& rng, std::size_t d, double beta);

// |m(s) - (r^T s - s^T H s / 2 - M ||s||^3 / 3)| relative to the size of the
// terms, over random (g, H, s, M) with d in 1..50, including M = 1e-6 and s = 0.
CheckResult check_identity_suite(std::size_t instances, std::uint64_t seed);

// m(s) <= -(M/12)(1 - 2 theta)||s||^3 + ||H + beta I||_op ||s||^2 / 2 for
// solver steps at each theta; zero tolerance.
CheckResult check_model_upper(std::size_t instances, std::span<const double> theta_grid, std::uint64_t seed);

// solve() at `theta` against the eigendecomposition oracle: relative step-norm
// error <= 1e-5 and model-value error <= 1e-8 (d in {2, 5, 20, 50}, beta in {0, 1}).
CheckResult check_oracle_equivalence(std::size_t instances, double theta, std::uint64_t seed);

struct EmaWeightStats {
  double c = 0.0;
  // sup_t sum_j w_{t,j}^2 sqrt(t + 1) / c and its argmax.
  double sup = 0.0;
  std::size_t argsup = 0;
  // Same with the snapshot weight w_{t,0} left out.
  double sup_recursive = 0.0;
  // Same with w_{t,0} replaced by alpha_0 prod_k (1 - alpha_k), alpha_0 = c.
  double sup_alpha0 = 0.0;
  double max_sum_defect = 0.0;
  // S(t_max) / S(t_max / 2); close to 2^(-1/2) when S ~ t^(-1/2).
  double doubling_ratio = 0.0;
};

EmaWeightStats ema_weight_stats(double c, std::size_t t_max);

// Passes when every sup <= bound and the weights sum to one within 1e-12.
CheckResult check_ema_weight_bound(std::span<const double> c_grid, std::size_t t_max, double bound = 10.0);

struct VarianceOptions {
  std::vector<double> batch_sizes{1, 4, 16, 64};
  std::vector<double> step_norms{1e-2, 0.0316227766016838, 1e-1, 0.316227766016838};
  std::vector<double> probe_counts{4, 16, 64, 256};
  std::size_t trials = 2000;
  std::size_t probe_trials = 300;
  // Batch used for the step-norm and probe sweeps.
  std::size_t b = 8;
  double tolerance = 0.2;
};

// Log-log slopes of the recursive increment error: gradient and Hessian vs b
// (-1), vs ||s|| (+2), and the probe-sketch difference error vs q (-1).
CheckResult check_variance_scalings(const FiniteSumProblem& problem, const VarianceOptions& options,
                                    std::uint64_t seed);

// Mean recursive increments (gradient and dense Hessian) against the exact
// differences. Statistic ||mean - truth||^2 * trials / tr(Cov) must be <= 9.
CheckResult check_martingale_unbiasedness(const FiniteSumProblem& problem, std::size_t trials,
                                          std::uint64_t seed);

// Single-probe component sketches applied to a fixed vector, averaged, against
// the exact Hessian-vector product; same statistic as above.
CheckResult check_hutchinson_unbiasedness(const FiniteSumProblem& problem, std::size_t samples,
                                          std::uint64_t seed);

// Exact-oracle cubic Newton from x0: every step satisfies
// F(x + s) <= F(x) + m(s) - ((M - L2)/6)||s||^3 + 1e-8.
CheckResult check_one_step_bound(const FiniteSumProblem& problem, const ProblemConstants& constants,
                                 const Vector& x0, std::size_t steps);

struct SospCase {
  std::string name;
  ProblemPtr problem;
  ProblemConstants constants;
  RunConfig config;
  // x0 ~ x0_scale * N(0, I), drawn per run.
  double x0_scale = 1.0;
};

struct SospRun {
  std::string case_name;
  std::uint64_t seed = 0;
  Termination terminated_by = Termination::Budget;
  double grad_norm = 0.0;
  double lambda_min = 0.0;
  std::size_t iterations = 0;
  bool accounting_ok = false;
};

struct SospOutcome {
  CheckResult result;
  std::vector<SospRun> runs;
};

// Per case: means over StepNorm-terminated runs of ||grad F|| <= eps and
// lambda_min >= -sqrt(L2 eps); worst cases within 5x / 2x of those.
SospOutcome check_sosp_at_termination(std::span<const SospCase> cases, std::size_t runs, std::uint64_t seed,
                                      const StepObserver& observer = {});

// Independent recomputation of both inexactness conditions for observed steps.
// Thread-safe; attach observer() to any number of runs.
class InexactnessAudit {
 public:
  void observe(const StepAudit& audit);
  StepObserver observer();
  CheckResult result(const std::string& name) const;

  std::size_t accepted() const;
  std::size_t violations() const;

 private:
  mutable std::mutex mu_;
  std::size_t steps_ = 0;
  std::size_t accepted_ = 0;
  std::size_t violations_ = 0;
  std::size_t exempt_ = 0;
  // max ||r|| / bound and max (-r^T s) / bound over accepted steps.
  double worst_norm_ratio_ = 0.0;
  double worst_dir_ratio_ = 0.0;
  std::string first_violation_;
};

// paper totals == n * epochs + b * steps, raw totals == n * epochs + 2 b * steps.
// `steps` is the count of recursive updates (per-step fresh batches for the
// subsampled baseline, which takes no snapshot).
CheckResult check_accounting(const RunResult& result, std::size_t n);

struct SuiteOptions {
  std::uint64_t seed = 20240601;
  std::size_t identity_instances = 500;
  std::size_t upper_instances = 200;
  std::size_t equivalence_instances = 200;
  std::size_t ema_t_max = 10000;
  std::size_t sosp_runs = 20;
  bool run_sosp = true;
};

// Runs every check (in parallel), results in a fixed order.
std::vector<CheckResult> run_verification_suite(const SuiteOptions& options);

std::string results_json(std::span<const CheckResult> results);
std::string results_table(std::span<const CheckResult> results);

}  // namespace vrcn
