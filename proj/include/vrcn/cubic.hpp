#pragma once

// Cubic-regularized model
//   m(s) = g^T s + 1/2 s^T H s + beta/2 ||s||^2 + M/6 ||s||^3
// and its (inexact) minimization through the secular equation
//   psi(lambda) = (2/M) lambda - ||(H + beta I + lambda I)^{-1} g|| = 0.

#include <cstddef>
#include <cstdint>
#include <string>

#include "vrcn/linalg.hpp"

namespace vrcn {

struct CubicModel {
  Vector g;
  SymmetricOperator H;
  double beta = 0.0;
  double M = 1.0;

  std::size_t dim() const { return g.size(); }
  void validate() const;
};

double model_value(const CubicModel& model, std::span<const double> s);
// r = g + (H + beta I) s + (M/2) ||s|| s
Vector model_grad(const CubicModel& model, std::span<const double> s);
// r^T s - 1/2 s^T (H + beta I) s - (M/3) ||s||^3, an exact rewrite of m(s).
double model_value_from_residual(const CubicModel& model, std::span<const double> s);
// |m(s) - model_value_from_residual(s)|
double identity_check(const CubicModel& model, std::span<const double> s);

struct InexactnessReport {
  bool norm_ok = false;  // ||r|| <= theta (M/2) ||s||^2
  bool dir_ok = false;   // r^T s >= -theta (M/6) ||s||^3
  double theta_used = 0.0;
  double residual_norm = 0.0;
  double norm_bound = 0.0;
  double r_dot_s = 0.0;
  double dir_bound = 0.0;

  bool ok() const { return norm_ok && dir_ok; }
};

// Recomputes r from (g, H, beta, M, s). For s = 0 the norm test becomes ||g|| <= g_floor.
InexactnessReport check_inexactness(const CubicModel& model, std::span<const double> s,
                                    double theta, double g_floor = 0.0);

enum class SolveStatus { Converged, GradientZero, BracketExpanded, ToleranceFloor };
std::string to_string(SolveStatus status);

struct SolverConfig {
  double theta = 0.1;
  // CG relative tolerance is c_theta * theta (tightened 10x per escalation).
  double c_theta = 0.1;
  std::size_t max_bisect = 100;
  // 0 selects 5 d + 100.
  std::size_t max_cg = 0;
  // Negative selects 1e-13 (1 + ||H + beta I||).
  double g_floor = -1.0;
  std::size_t max_escalations = 3;
  // After acceptance, keep iterating on the secular equation with tight CG
  // solves and adopt the sharper step when it still passes both tests.
  bool refine = true;
  double refine_cg_tol = 1e-13;
  double refine_rel_tol = 1e-11;
  std::size_t refine_max_iters = 60;
  std::size_t lanczos_iters = 100;
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
  bool jacobi = false;
};

struct SubproblemSolution {
  Vector s;
  Vector r;
  double lambda = 0.0;
  double model_value = 0.0;
  std::size_t bisection_iters = 0;
  std::size_t cg_total_iters = 0;
  std::size_t escalations = 0;
  SolveStatus status = SolveStatus::Converged;
  bool hard_case = false;
  // The returned step did not decrease the model and was replaced by s = 0.
  bool anomaly = false;
  // Final bracket and secular values at its ends (NaN when not evaluated).
  double lambda_lo = 0.0;
  double lambda_hi = 0.0;
  double psi_lo = 0.0;
  double psi_hi = 0.0;
  // Smallest eigenvalue estimate of H + beta I used for the bracket floor.
  double lambda_min_estimate = 0.0;
};

SubproblemSolution solve(const CubicModel& model, const SolverConfig& cfg = {});

// Dense eigendecomposition oracle for d <= 200 (global minimizer, hard case included).
SubproblemSolution solve_exact_reference(const CubicModel& model, double tol = 1e-12);

inline constexpr std::size_t kExactReferenceMaxDim = 200;

}  // namespace vrcn
