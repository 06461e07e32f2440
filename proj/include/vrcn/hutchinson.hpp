#pragma once

// Matrix-free Hessian estimates built from probe pairs (A z, z) with E[z z^T] = I.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <variant>
#include <vector>

#include "vrcn/linalg.hpp"
#include "vrcn/problems.hpp"

namespace vrcn {

enum class ProbeDistribution { Rademacher, Gaussian };

Vector draw_probe(std::size_t d, ProbeDistribution dist, std::mt19937_64& rng);

// A symmetric operator stored as weighted probe pairs plus an optional dense
// accumulator:
//   apply(v) = fold v + sum_k w_k (y_k (z_k^T v) + z_k (y_k^T v)) / 2
// When the term count would exceed the cap, the oldest terms are folded into
// the dense accumulator, which is algebraically exact.
class ProbeSketch {
 public:
  static constexpr std::size_t kDefaultCap = 256;

  ProbeSketch() = default;
  explicit ProbeSketch(std::size_t dim, std::size_t cap = kDefaultCap);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t cap() const noexcept { return cap_; }
  std::size_t term_count() const noexcept { return terms_.size(); }
  bool has_fold() const noexcept { return fold_ != nullptr; }

  void add_term(double weight, Vector y, Vector z);

  void apply_into(std::span<const double> v, std::span<double> out) const;
  Vector apply(std::span<const double> v) const;
  Matrix to_dense() const;
  SymmetricOperator as_operator() const;

  // wa * a + wb * b without re-evaluating any probe.
  static ProbeSketch combine(const ProbeSketch& a, double wa, const ProbeSketch& b, double wb);
  ProbeSketch scaled(double a) const;

  // Folds every term into the dense accumulator.
  void fold_all();

 private:
  struct Term {
    double weight;
    std::shared_ptr<const Vector> y;
    std::shared_ptr<const Vector> z;
  };

  void compress();
  Matrix& mutable_fold();

  std::size_t dim_ = 0;
  std::size_t cap_ = kDefaultCap;
  std::vector<Term> terms_;
  // Shared between copies; copied before any mutation.
  std::shared_ptr<const Matrix> fold_;
};

struct HutchinsonConfig {
  std::size_t q = 8;
  // Snapshot sketches use snapshot_multiplier * q probes.
  std::size_t snapshot_multiplier = 4;
  ProbeDistribution dist = ProbeDistribution::Rademacher;
  std::size_t cap = ProbeSketch::kDefaultCap;
};

// q probes for one component: (1/q) sum_j (hess f_i(x) z_j, z_j).
ProbeSketch sketch_component(const FiniteSumProblem& problem, std::size_t i,
                             std::span<const double> x, std::size_t q, ProbeDistribution dist,
                             std::mt19937_64& rng, std::size_t cap = ProbeSketch::kDefaultCap);

// Full-batch sketch of the Hessian of F with q probes shared by all components.
ProbeSketch sketch_full(const FiniteSumProblem& problem, std::span<const double> x, std::size_t q,
                        ProbeDistribution dist, std::mt19937_64& rng,
                        std::size_t cap = ProbeSketch::kDefaultCap);

// Adds to `acc` the sketch of weight * (hess f_i(x_curr) - hess f_i(x_prev)),
// using the same q probes at both points. Returns the number of hvp calls (2q).
std::size_t add_component_difference(ProbeSketch& acc, const FiniteSumProblem& problem,
                                     std::size_t i, std::span<const double> x_curr,
                                     std::span<const double> x_prev, double weight, std::size_t q,
                                     ProbeDistribution dist, std::mt19937_64& rng);

// Hessian estimate under either backend.
using HessianRepr = std::variant<Matrix, ProbeSketch>;

std::size_t repr_dim(const HessianRepr& h);
SymmetricOperator repr_operator(const HessianRepr& h);
Matrix repr_dense(const HessianRepr& h);
// wa * a + wb * b; both must hold the same alternative.
HessianRepr repr_combine(const HessianRepr& a, double wa, const HessianRepr& b, double wb);

// Mean squared Frobenius error of the mini-batch sketch of
// hess F(y) - hess F(x) over `trials` independent draws. b == n uses every
// component once; otherwise components are drawn with replacement.
double hutchinson_difference_error(const FiniteSumProblem& problem, std::span<const double> x,
                                   std::span<const double> y, std::size_t b, std::size_t q,
                                   std::size_t trials, ProbeDistribution dist,
                                   std::mt19937_64& rng);

}  // namespace vrcn
