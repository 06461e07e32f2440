#include "vrcn/krylov.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "vrcn/errors.hpp"
#include "vrcn/kernels.hpp"

namespace vrcn {

CgResult cg_solve(const SymmetricOperator& a, const Vector& rhs, const CgOptions& options) {
  const std::size_t d = a.dim();
  require_same_dim(d, rhs.size(), "cg_solve");
  require_finite(rhs, "cg_solve rhs");
  const auto& k = kernels::active();

  CgResult result{Vector(d), {}};
  const double rhs_norm = norm(rhs);
  if (rhs_norm == 0.0) return result;
  const double target = options.rel_tol * rhs_norm;

  Vector inv_diag;
  if (options.jacobi) {
    inv_diag = a.diagonal();
    for (double& v : inv_diag) {
      const double shifted = v + options.shift;
      // Non-positive diagonal entries are left unpreconditioned.
      v = shifted > 0.0 ? 1.0 / shifted : 1.0;
    }
  }
  auto precondition = [&](const Vector& r, Vector& z) {
    if (!options.jacobi) {
      z = r;
      return;
    }
    for (std::size_t i = 0; i < d; ++i) z[i] = inv_diag[i] * r[i];
  };

  Vector& x = result.x;
  Vector r = rhs;
  Vector z(d);
  precondition(r, z);
  Vector p = z;
  Vector ap(d);
  double rz = k.dot(r.data(), z.data(), d);
  double r_norm = rhs_norm;

  std::size_t it = 0;
  while (r_norm > target && it < options.max_iters) {
    a.apply_into(p, ap.span());
    if (options.shift != 0.0) k.axpy(options.shift, p.data(), ap.data(), d);
    const double curvature = k.dot(p.data(), ap.data(), d);
    if (!(curvature > 0.0)) {
      result.report.breakdown = true;
      break;
    }
    const double step = rz / curvature;
    k.axpy(step, p.data(), x.data(), d);
    k.axpy(-step, ap.data(), r.data(), d);
    ++it;
    r_norm = norm(r);
    if (r_norm <= target) break;
    precondition(r, z);
    const double rz_next = k.dot(r.data(), z.data(), d);
    const double beta = rz_next / rz;
    rz = rz_next;
    // p = z + beta p
    k.scal(beta, p.data(), d);
    k.axpy(1.0, z.data(), p.data(), d);
  }
  result.report.iterations = it;
  result.report.final_residual_norm = r_norm;
  return result;
}

CgResult cg_solve(const SymmetricOperator& a, const Vector& rhs, double shift, double rel_tol,
                  std::size_t max_iters) {
  return cg_solve(a, rhs, CgOptions{shift, rel_tol, max_iters, false});
}

namespace {

Vector gaussian_unit(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  for (double& x : v) x = normal(rng);
  const double nv = norm(v);
  v *= 1.0 / nv;
  return v;
}

EigenPair lanczos_extreme(const SymmetricOperator& a, std::size_t iters, std::uint64_t seed,
                          bool bottom) {
  const std::size_t d = a.dim();
  if (d == 0) throw DimensionError("lanczos: empty operator");
  if (iters == 0) throw std::invalid_argument("lanczos: iters must be >= 1");
  const std::size_t m = std::min(iters, d);
  const auto& k = kernels::active();

  std::vector<Vector> basis;
  basis.reserve(m);
  basis.push_back(gaussian_unit(d, seed));
  std::vector<double> alpha;
  std::vector<double> beta;
  Vector w(d);
  double scale = 0.0;

  for (std::size_t j = 0; j < m; ++j) {
    a.apply_into(basis[j], w.span());
    const double aj = k.dot(basis[j].data(), w.data(), d);
    alpha.push_back(aj);
    // Two passes of classical Gram-Schmidt against the whole basis.
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vector& q : basis) {
        const double c = k.dot(q.data(), w.data(), d);
        k.axpy(-c, q.data(), w.data(), d);
      }
    }
    const double bj = norm(w);
    scale = std::max({scale, std::abs(aj), bj});
    if (j + 1 == m || bj <= 1e-13 * std::max(scale, 1e-300)) break;
    beta.push_back(bj);
    Vector next = w;
    next *= 1.0 / bj;
    basis.push_back(std::move(next));
  }

  const std::size_t steps = alpha.size();
  Eigen::VectorXd diag(steps);
  Eigen::VectorXd sub(steps > 0 ? steps - 1 : 0);
  for (std::size_t i = 0; i < steps; ++i) diag[static_cast<Eigen::Index>(i)] = alpha[i];
  for (std::size_t i = 0; i + 1 < steps; ++i) sub[static_cast<Eigen::Index>(i)] = beta[i];

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  const Eigen::Index pick = bottom ? 0 : static_cast<Eigen::Index>(steps) - 1;

  EigenPair out;
  out.value = solver.eigenvalues()[pick];
  out.vector = Vector(d);
  for (std::size_t i = 0; i < steps; ++i) {
    k.axpy(solver.eigenvectors()(static_cast<Eigen::Index>(i), pick), basis[i].data(),
           out.vector.data(), d);
  }
  const double nv = norm(out.vector);
  if (nv > 0.0) out.vector *= 1.0 / nv;
  return out;
}

std::uint64_t probe_seed(std::uint64_t seed, std::size_t probe) {
  // splitmix64 step so that consecutive probes get unrelated streams.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (probe + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

EigenPair lanczos_bottom(const SymmetricOperator& a, std::size_t iters, std::uint64_t seed) {
  return lanczos_extreme(a, iters, seed, true);
}

double lanczos_lambda_min(const SymmetricOperator& a, std::size_t probes, std::size_t iters,
                          std::uint64_t seed) {
  double best = lanczos_extreme(a, iters, seed, true).value;
  for (std::size_t p = 1; p < probes; ++p) {
    best = std::min(best, lanczos_extreme(a, iters, probe_seed(seed, p), true).value);
  }
  return best;
}

double lanczos_lambda_max(const SymmetricOperator& a, std::size_t probes, std::size_t iters,
                          std::uint64_t seed) {
  double best = lanczos_extreme(a, iters, seed, false).value;
  for (std::size_t p = 1; p < probes; ++p) {
    best = std::max(best, lanczos_extreme(a, iters, probe_seed(seed, p), false).value);
  }
  return best;
}

double lanczos_operator_norm(const SymmetricOperator& a, std::size_t iters, std::uint64_t seed) {
  const double lo = lanczos_extreme(a, iters, seed, true).value;
  const double hi = lanczos_extreme(a, iters, seed, false).value;
  return std::max(std::abs(lo), std::abs(hi));
}

Vector symmetric_eigenvalues(const Matrix& m) {
  if (!m.square()) throw DimensionError("symmetric_eigenvalues: matrix is not square");
  const auto d = static_cast<Eigen::Index>(m.rows());
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> view(
      m.data(), d, d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(view, Eigen::EigenvaluesOnly);
  Vector out(m.rows());
  for (Eigen::Index i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] = solver.eigenvalues()[i];
  return out;
}

double symmetric_operator_norm(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  const Vector ev = symmetric_eigenvalues(m);
  return std::max(std::abs(ev[0]), std::abs(ev[ev.size() - 1]));
}

}  // namespace vrcn
