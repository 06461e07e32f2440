#pragma once

// Recursive (SARAH) gradient and Hessian estimators re-anchored by full-batch
// snapshots and smoothed by an exponential moving average.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "vrcn/hutchinson.hpp"
#include "vrcn/linalg.hpp"
#include "vrcn/problems.hpp"

namespace vrcn {

// alpha_t = c (t + 1)^(-1/2) for t >= 1. A fixed alpha can be forced for tests
// and for the full-batch baseline.
struct EmaSchedule {
  double c = 0.5;
  std::optional<double> fixed_alpha;

  void validate() const;
  double alpha(std::size_t t) const;
};

// Weights of g_t as a combination of the recursive estimates hat_g_0..hat_g_t:
// w_0 = prod_{k=1..t} (1 - a_k), w_j = a_j prod_{k=j+1..t} (1 - a_k). They sum to one.
std::vector<double> ema_weights(const EmaSchedule& schedule, std::size_t t);

// Raw counters tally component evaluations; the *_paper counters
// charge n per snapshot and b per recursive step.
struct OracleCounter {
  std::uint64_t grad_raw = 0;
  std::uint64_t hess_raw = 0;
  std::uint64_t grad_paper = 0;
  std::uint64_t hess_paper = 0;
  // Hessian-vector products spent by the probe-sketch backend.
  std::uint64_t hvp_raw = 0;
  // Evaluations made for logging and diagnostics only.
  std::uint64_t diagnostic_value = 0;
  std::uint64_t diagnostic_grad = 0;
  std::uint64_t diagnostic_hess = 0;

  friend bool operator==(const OracleCounter&, const OracleCounter&) = default;
};

enum class HessianBackend { Dense, Hutchinson };

enum class Sampling {
  WithReplacement,
  WithoutReplacement,
  // Every index exactly once, in order; requires b == n.
  FullPass,
};

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t b, Sampling mode,
                                      std::mt19937_64& rng);

struct GradEstimatorState {
  Vector hat_g;
  Vector g_ema;
  std::size_t t = 0;
};

struct HessEstimatorState {
  HessianRepr hat_h;
  HessianRepr h_ema;
  std::size_t t = 0;
};

struct EstimatorContext {
  HessianBackend backend = HessianBackend::Dense;
  HutchinsonConfig hutchinson;
  // Probe randomness; required by the Hutchinson backend.
  std::mt19937_64* rng = nullptr;
  OracleCounter* counter = nullptr;
};

struct EstimatorStates {
  GradEstimatorState grad;
  HessEstimatorState hess;
};

// hat_g = g = grad F(x0); hat_H = H = hess F(x0), or a full-batch probe sketch.
EstimatorStates snapshot(const FiniteSumProblem& problem, std::span<const double> x0,
                         const EstimatorContext& ctx);

// One recursive update between x_prev and x_curr on `batch`, followed by the
// moving-average mix with alpha_t. States must be at step t - 1.
void sarah_step(EstimatorStates& states, const FiniteSumProblem& problem,
                std::span<const double> x_prev, std::span<const double> x_curr,
                std::span<const std::size_t> batch, const EmaSchedule& schedule, std::size_t t,
                const EstimatorContext& ctx);

struct EstimatorErrors {
  double eps_norm = 0.0;      // ||g_t - grad F(x)||
  double sigma_opnorm = 0.0;  // ||H_t - hess F(x)||_op
  double sigma_frobenius = 0.0;
};

// Full-pass comparison against the exact derivatives; counted as diagnostic oracles.
EstimatorErrors diagnostic_errors(const EstimatorStates& states, const FiniteSumProblem& problem,
                                  std::span<const double> x, OracleCounter* counter = nullptr);

}  // namespace vrcn
