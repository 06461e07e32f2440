#pragma once

#include <cstddef>
#include <cstdint>

#include "vrcn/linalg.hpp"

namespace vrcn {

struct KrylovReport {
  std::size_t iterations = 0;
  double final_residual_norm = 0.0;
  // A direction d with d^T (A + shift I) d <= 0 was met; the solve stopped there.
  bool breakdown = false;
};

struct CgOptions {
  double shift = 0.0;
  double rel_tol = 1e-10;
  std::size_t max_iters = 1000;
  // Diagonal (Jacobi) preconditioner. Off by default.
  bool jacobi = false;
};

struct CgResult {
  Vector x;
  KrylovReport report;
};

// Solves (A + shift I) x = rhs from x0 = 0 until ||residual|| <= rel_tol ||rhs||.
// Indefiniteness is reported through report.breakdown, never thrown; x is then
// the last iterate before the offending direction.
CgResult cg_solve(const SymmetricOperator& a, const Vector& rhs, const CgOptions& options = {});
CgResult cg_solve(const SymmetricOperator& a, const Vector& rhs, double shift, double rel_tol,
                  std::size_t max_iters);

struct EigenPair {
  double value = 0.0;
  Vector vector;  // unit norm
};

// Lanczos with full reorthogonalization from a Gaussian start vector drawn with
// `seed`. Runs min(iters, dim) steps and stops early on an invariant subspace.
// Returns the smallest Ritz pair.
EigenPair lanczos_bottom(const SymmetricOperator& a, std::size_t iters, std::uint64_t seed);

// Smallest Ritz value over `probes` independent start vectors.
double lanczos_lambda_min(const SymmetricOperator& a, std::size_t probes, std::size_t iters,
                          std::uint64_t seed);
double lanczos_lambda_max(const SymmetricOperator& a, std::size_t probes, std::size_t iters,
                          std::uint64_t seed);
// max(|lambda_min|, |lambda_max|) estimated by Lanczos.
double lanczos_operator_norm(const SymmetricOperator& a, std::size_t iters, std::uint64_t seed);

// Exact eigenvalues of a dense symmetric matrix (ascending).
Vector symmetric_eigenvalues(const Matrix& m);
// Exact spectral norm of a dense symmetric matrix.
double symmetric_operator_norm(const Matrix& m);

}  // namespace vrcn
