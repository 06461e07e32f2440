#include "vrcn/hutchinson.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

#include "vrcn/kernels.hpp"

namespace vrcn {

Vector draw_probe(std::size_t d, ProbeDistribution dist, std::mt19937_64& rng) {
  Vector z(d);
  if (dist == ProbeDistribution::Rademacher) {
    // One random bit per entry, taken from 64-bit draws in order.
    std::uint64_t bits = 0;
    for (std::size_t j = 0; j < d; ++j) {
      if (j % 64 == 0) bits = rng();
      z[j] = (bits & 1u) ? 1.0 : -1.0;
      bits >>= 1;
    }
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : z) v = normal(rng);
  }
  return z;
}

ProbeSketch::ProbeSketch(std::size_t dim, std::size_t cap) : dim_(dim), cap_(cap) {}

void ProbeSketch::add_term(double weight, Vector y, Vector z) {
  require_same_dim(dim_, y.size(), "ProbeSketch term y");
  require_same_dim(dim_, z.size(), "ProbeSketch term z");
  terms_.push_back({weight, std::make_shared<const Vector>(std::move(y)),
                    std::make_shared<const Vector>(std::move(z))});
  compress();
}

Matrix& ProbeSketch::mutable_fold() {
  auto copy = fold_ ? std::make_shared<Matrix>(*fold_) : std::make_shared<Matrix>(dim_, dim_);
  Matrix& ref = *copy;
  fold_ = std::move(copy);
  return ref;
}

void ProbeSketch::compress() {
  if (terms_.size() <= cap_) return;
  const std::size_t keep = cap_ / 2;
  const std::size_t drop = terms_.size() - keep;
  Matrix& fold = mutable_fold();
  const auto& k = kernels::active();
  for (std::size_t t = 0; t < drop; ++t) {
    const Term& term = terms_[t];
    k.syr2(0.5 * term.weight, term.y->data(), term.z->data(), fold.data(), dim_);
  }
  terms_.erase(terms_.begin(), terms_.begin() + static_cast<std::ptrdiff_t>(drop));
}

void ProbeSketch::fold_all() {
  if (terms_.empty()) return;
  Matrix& fold = mutable_fold();
  const auto& k = kernels::active();
  for (const Term& term : terms_) {
    k.syr2(0.5 * term.weight, term.y->data(), term.z->data(), fold.data(), dim_);
  }
  terms_.clear();
}

void ProbeSketch::apply_into(std::span<const double> v, std::span<double> out) const {
  require_same_dim(dim_, v.size(), "ProbeSketch apply (input)");
  require_same_dim(dim_, out.size(), "ProbeSketch apply (output)");
  const auto& k = kernels::active();
  if (fold_) {
    k.gemv(fold_->data(), dim_, dim_, v.data(), out.data());
  } else {
    std::fill(out.begin(), out.end(), 0.0);
  }
  for (const Term& term : terms_) {
    const double zv = k.dot(term.z->data(), v.data(), dim_);
    const double yv = k.dot(term.y->data(), v.data(), dim_);
    k.axpy(0.5 * term.weight * zv, term.y->data(), out.data(), dim_);
    k.axpy(0.5 * term.weight * yv, term.z->data(), out.data(), dim_);
  }
}

Vector ProbeSketch::apply(std::span<const double> v) const {
  Vector out(dim_);
  apply_into(v, out.span());
  return out;
}

Matrix ProbeSketch::to_dense() const {
  Matrix m = fold_ ? *fold_ : Matrix(dim_, dim_);
  const auto& k = kernels::active();
  for (const Term& term : terms_) {
    k.syr2(0.5 * term.weight, term.y->data(), term.z->data(), m.data(), dim_);
  }
  return m;
}

SymmetricOperator ProbeSketch::as_operator() const {
  auto self = std::make_shared<const ProbeSketch>(*this);
  return SymmetricOperator::matrix_free(
      dim_, [self](std::span<const double> v, std::span<double> out) { self->apply_into(v, out); });
}

ProbeSketch ProbeSketch::combine(const ProbeSketch& a, double wa, const ProbeSketch& b, double wb) {
  require_same_dim(a.dim_, b.dim_, "ProbeSketch combine");
  ProbeSketch out(a.dim_, std::max(a.cap_, b.cap_));
  out.terms_.reserve(a.terms_.size() + b.terms_.size());
  // Terms shared by both operands (same stored probe) merge their weights.
  std::unordered_map<const Vector*, std::size_t> index;
  auto push = [&](const Term& term, double w) {
    const auto it = index.find(term.y.get());
    if (it != index.end()) {
      out.terms_[it->second].weight += w * term.weight;
      return;
    }
    index.emplace(term.y.get(), out.terms_.size());
    out.terms_.push_back({w * term.weight, term.y, term.z});
  };
  if (wa != 0.0) {
    for (const Term& t : a.terms_) push(t, wa);
  }
  if (wb != 0.0) {
    for (const Term& t : b.terms_) push(t, wb);
  }
  std::erase_if(out.terms_, [](const Term& t) { return t.weight == 0.0; });

  const bool fa = a.fold_ && wa != 0.0;
  const bool fb = b.fold_ && wb != 0.0;
  if (fa || fb) {
    Matrix fold(a.dim_, a.dim_);
    if (fa) add_scaled(fold, wa, *a.fold_);
    if (fb) add_scaled(fold, wb, *b.fold_);
    out.fold_ = std::make_shared<const Matrix>(std::move(fold));
  }
  out.compress();
  return out;
}

ProbeSketch ProbeSketch::scaled(double a) const { return combine(*this, a, ProbeSketch(dim_, cap_), 0.0); }

ProbeSketch sketch_component(const FiniteSumProblem& problem, std::size_t i,
                             std::span<const double> x, std::size_t q, ProbeDistribution dist,
                             std::mt19937_64& rng, std::size_t cap) {
  if (q == 0) throw std::invalid_argument("sketch_component: q must be >= 1");
  ProbeSketch sketch(problem.d(), cap);
  for (std::size_t j = 0; j < q; ++j) {
    Vector z = draw_probe(problem.d(), dist, rng);
    Vector y = problem.component_hvp(i, x, z);
    sketch.add_term(1.0 / static_cast<double>(q), std::move(y), std::move(z));
  }
  return sketch;
}

ProbeSketch sketch_full(const FiniteSumProblem& problem, std::span<const double> x, std::size_t q,
                        ProbeDistribution dist, std::mt19937_64& rng, std::size_t cap) {
  if (q == 0) throw std::invalid_argument("sketch_full: q must be >= 1");
  const std::size_t d = problem.d();
  const auto& k = kernels::active();
  ProbeSketch sketch(d, cap);
  Vector hz(d);
  for (std::size_t j = 0; j < q; ++j) {
    Vector z = draw_probe(d, dist, rng);
    Vector y(d);
    for (std::size_t i = 0; i < problem.n(); ++i) {
      problem.component_hvp_into(i, x, z, hz.span());
      k.axpy(1.0, hz.data(), y.data(), d);
    }
    y *= 1.0 / static_cast<double>(problem.n());
    sketch.add_term(1.0 / static_cast<double>(q), std::move(y), std::move(z));
  }
  return sketch;
}

std::size_t add_component_difference(ProbeSketch& acc, const FiniteSumProblem& problem,
                                     std::size_t i, std::span<const double> x_curr,
                                     std::span<const double> x_prev, double weight, std::size_t q,
                                     ProbeDistribution dist, std::mt19937_64& rng) {
  if (q == 0) throw std::invalid_argument("add_component_difference: q must be >= 1");
  const std::size_t d = problem.d();
  Vector prev(d);
  for (std::size_t j = 0; j < q; ++j) {
    Vector z = draw_probe(d, dist, rng);
    Vector y(d);
    problem.component_hvp_into(i, x_curr, z, y.span());
    problem.component_hvp_into(i, x_prev, z, prev.span());
    y -= prev;
    acc.add_term(weight / static_cast<double>(q), std::move(y), std::move(z));
  }
  return 2 * q;
}

std::size_t repr_dim(const HessianRepr& h) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Matrix>) {
          return v.rows();
        } else {
          return v.dim();
        }
      },
      h);
}

SymmetricOperator repr_operator(const HessianRepr& h) {
  if (const auto* m = std::get_if<Matrix>(&h)) return SymmetricOperator::dense(*m);
  return std::get<ProbeSketch>(h).as_operator();
}

Matrix repr_dense(const HessianRepr& h) {
  if (const auto* m = std::get_if<Matrix>(&h)) return *m;
  return std::get<ProbeSketch>(h).to_dense();
}

HessianRepr repr_combine(const HessianRepr& a, double wa, const HessianRepr& b, double wb) {
  if (a.index() != b.index()) throw std::invalid_argument("repr_combine: mixed representations");
  if (const auto* ma = std::get_if<Matrix>(&a)) {
    const Matrix& mb = std::get<Matrix>(b);
    Matrix out(ma->rows(), ma->cols());
    add_scaled(out, wa, *ma);
    add_scaled(out, wb, mb);
    return out;
  }
  return ProbeSketch::combine(std::get<ProbeSketch>(a), wa, std::get<ProbeSketch>(b), wb);
}

double hutchinson_difference_error(const FiniteSumProblem& problem, std::span<const double> x,
                                   std::span<const double> y, std::size_t b, std::size_t q,
                                   std::size_t trials, ProbeDistribution dist,
                                   std::mt19937_64& rng) {
  if (b == 0 || trials == 0) throw std::invalid_argument("hutchinson_difference_error: b, trials >= 1");
  const std::size_t n = problem.n();
  const Matrix truth = problem.full_hess_dense(y) - problem.full_hess_dense(x);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  double total = 0.0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    ProbeSketch sketch(problem.d(), ProbeSketch::kDefaultCap);
    for (std::size_t k = 0; k < b; ++k) {
      const std::size_t i = b == n ? k : pick(rng);
      add_component_difference(sketch, problem, i, y, x, 1.0 / static_cast<double>(b), q, dist, rng);
    }
    const Matrix err = sketch.to_dense() - truth;
    total += norm_squared(err.flat());
  }
  return total / static_cast<double>(trials);
}

}  // namespace vrcn
