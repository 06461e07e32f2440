#pragma once

// Finite-sum objectives F(x) = (1/n) sum_i f_i(x) with per-component oracles.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vrcn/linalg.hpp"

namespace vrcn {

// Bounds the optimizer schedules depend on. Fields that a problem cannot
// bound analytically stay empty until resolve_constants() fills them.
struct KnownConstants {
  std::optional<double> L2;      // Lipschitz constant of the Hessian of F (operator norm)
  std::optional<double> LH;      // bound on ||Hessian of F||_op and mean-square gradient Lipschitz
  std::optional<double> sigma1;  // sqrt of max mean ||grad f_i - grad F||^2
  std::optional<double> sigma2;  // same for Hessians in Frobenius norm
};

struct ProblemConstants {
  double L2 = 0.0;
  double LH = 0.0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  // Distance estimate ||x0 - x*||; only the convex schedule needs it.
  std::optional<double> R;
  // Frobenius-Lipschitz factor for the estimator Hessians (multiplies L2).
  double c_tilde_h = 1.0;
};

struct KnownOptimum {
  Vector x;
  double value = 0.0;
};

class FiniteSumProblem {
 public:
  virtual ~FiniteSumProblem() = default;

  virtual std::size_t n() const = 0;
  virtual std::size_t d() const = 0;
  virtual std::string kind() const = 0;

  virtual double component_value(std::size_t i, std::span<const double> x) const = 0;
  // Overwrites out with grad f_i(x).
  virtual void component_grad_into(std::size_t i, std::span<const double> x,
                                   std::span<double> out) const = 0;
  // Overwrites out with (Hessian of f_i at x) v.
  virtual void component_hvp_into(std::size_t i, std::span<const double> x,
                                  std::span<const double> v, std::span<double> out) const = 0;
  // acc += weight * (Hessian of f_i at x).
  virtual void component_hessian_accumulate(std::size_t i, std::span<const double> x,
                                            double weight, Matrix& acc) const = 0;

  virtual KnownConstants analytic_constants() const { return {}; }
  virtual std::optional<KnownOptimum> known_optimum() const { return std::nullopt; }
  // Convexity of F; used to pick defaults, never trusted by the checks.
  virtual bool convex() const { return false; }

  Vector component_grad(std::size_t i, std::span<const double> x) const;
  Vector component_hvp(std::size_t i, std::span<const double> x, std::span<const double> v) const;
  Matrix component_hessian_dense(std::size_t i, std::span<const double> x) const;

  // Exact averages over all components, summed in index order.
  double full_value(std::span<const double> x) const;
  Vector full_grad(std::span<const double> x) const;
  Matrix full_hess_dense(std::span<const double> x) const;
  SymmetricOperator full_hess(std::span<const double> x) const;

 protected:
  void check_index(std::size_t i) const;
  void check_point(std::span<const double> x) const;
};

using ProblemPtr = std::shared_ptr<const FiniteSumProblem>;

struct Dataset {
  Matrix features;  // one sample per row
  std::vector<double> labels;
};

// Gaussian features with rows scaled to unit norm; labels are the sign of a
// planted linear score, flipped independently with probability `flip`.
Dataset make_classification_dataset(std::size_t n, std::size_t d, double flip, std::uint64_t seed);

// f_i(x) = log(1 + exp(-b_i a_i^T x)) + (mu/2)||x||^2
ProblemPtr make_logistic_l2(Dataset data, double mu);
// f_i(x) = log(1 + exp(-b_i a_i^T x)) + lam * sum_j x_j^2 / (1 + x_j^2)
ProblemPtr make_nonconvex_logistic(Dataset data, double lam);

// f_i(x) = 1/2 x^T A_i x - b_i^T x
ProblemPtr make_quadratic(std::vector<Matrix> a, std::vector<Vector> b);
// Components share the Hessian `a`; offsets b_i = b + noise_i with the noise centered.
ProblemPtr make_shared_hessian_quadratic(Matrix a, Vector b, std::size_t n, double noise,
                                         std::uint64_t seed);

// f_i(x) = sum_j 1/4 (x_j - c_ij)^4 - 1/2 x_j^2 with c_ij = shift_scale * N(0, 1),
// centered over i so that each coordinate's shifts average to zero.
// Constants are bounds over the box |x_j| <= box.
ProblemPtr make_double_well(std::size_t n, std::size_t d, double shift_scale, std::uint64_t seed,
                            double box = 2.0);
// Same objective with explicit shifts (n x d).
ProblemPtr make_double_well_from_shifts(Matrix shifts, double box = 2.0);

// Maximum of |phi'''(t)| for phi(t) = log(1 + exp(-t)), i.e. sqrt(3)/18.
// Derived by scripts/logistic_third_derivative.py.
inline constexpr double kLogisticThirdDerivativeMax = 0.096225044864937617;

}  // namespace vrcn
