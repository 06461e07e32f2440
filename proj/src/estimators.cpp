#include "vrcn/estimators.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "vrcn/kernels.hpp"
#include "vrcn/krylov.hpp"

namespace vrcn {

void EmaSchedule::validate() const {
  if (fixed_alpha) {
    if (!(*fixed_alpha > 0.0 && *fixed_alpha <= 1.0)) {
      throw std::invalid_argument("fixed EMA weight must lie in (0, 1]");
    }
    return;
  }
  if (!(c > 0.0 && c <= 0.5)) throw std::invalid_argument("EMA constant c must lie in (0, 1/2]");
}

double EmaSchedule::alpha(std::size_t t) const {
  if (t == 0) throw std::invalid_argument("EMA weight is defined for t >= 1 only");
  if (fixed_alpha) return *fixed_alpha;
  return c / std::sqrt(static_cast<double>(t + 1));
}

std::vector<double> ema_weights(const EmaSchedule& schedule, std::size_t t) {
  std::vector<double> w(t + 1);
  double tail = 1.0;
  for (std::size_t j = t; j >= 1; --j) {
    const double a = schedule.alpha(j);
    w[j] = a * tail;
    tail *= 1.0 - a;
  }
  w[0] = tail;
  return w;
}

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t b, Sampling mode,
                                      std::mt19937_64& rng) {
  if (n == 0 || b == 0) throw std::invalid_argument("sample_batch: n and b must be >= 1");
  std::vector<std::size_t> batch(b);
  switch (mode) {
    case Sampling::WithReplacement: {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& i : batch) i = pick(rng);
      break;
    }
    case Sampling::WithoutReplacement: {
      if (b > n) throw std::invalid_argument("sample_batch: b > n without replacement");
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t k = 0; k < b; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, n - 1);
        std::swap(perm[k], perm[pick(rng)]);
        batch[k] = perm[k];
      }
      break;
    }
    case Sampling::FullPass:
      if (b != n) throw std::invalid_argument("sample_batch: full pass requires b == n");
      std::iota(batch.begin(), batch.end(), std::size_t{0});
      break;
  }
  return batch;
}

EstimatorStates snapshot(const FiniteSumProblem& problem, std::span<const double> x0,
                         const EstimatorContext& ctx) {
  const std::size_t n = problem.n();
  EstimatorStates s;
  s.grad.hat_g = problem.full_grad(x0);
  s.grad.g_ema = s.grad.hat_g;
  if (ctx.backend == HessianBackend::Dense) {
    s.hess.hat_h = problem.full_hess_dense(x0);
  } else {
    if (ctx.rng == nullptr) throw std::invalid_argument("snapshot: probe sketches need an rng");
    const std::size_t q = ctx.hutchinson.q * ctx.hutchinson.snapshot_multiplier;
    s.hess.hat_h = sketch_full(problem, x0, q, ctx.hutchinson.dist, *ctx.rng, ctx.hutchinson.cap);
    if (ctx.counter) ctx.counter->hvp_raw += static_cast<std::uint64_t>(n * q);
  }
  s.hess.h_ema = s.hess.hat_h;
  if (ctx.counter) {
    ctx.counter->grad_raw += n;
    ctx.counter->hess_raw += n;
    ctx.counter->grad_paper += n;
    ctx.counter->hess_paper += n;
  }
  return s;
}

void sarah_step(EstimatorStates& states, const FiniteSumProblem& problem,
                std::span<const double> x_prev, std::span<const double> x_curr,
                std::span<const std::size_t> batch, const EmaSchedule& schedule, std::size_t t,
                const EstimatorContext& ctx) {
  if (t != states.grad.t + 1 || t != states.hess.t + 1) {
    throw std::invalid_argument("sarah_step: expected step " + std::to_string(states.grad.t + 1) +
                                ", got " + std::to_string(t));
  }
  if (batch.empty()) throw std::invalid_argument("sarah_step: empty batch");
  const std::size_t d = problem.d();
  const std::size_t n = problem.n();
  require_same_dim(d, x_prev.size(), "sarah_step x_prev");
  require_same_dim(d, x_curr.size(), "sarah_step x_curr");
  for (std::size_t i : batch) {
    if (i >= n) throw std::out_of_range("sarah_step: batch index " + std::to_string(i) + " out of range");
  }
  const double alpha = schedule.alpha(t);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const auto& k = kernels::active();

  Vector delta_g(d);
  Vector gi_curr(d);
  Vector gi_prev(d);
  for (std::size_t i : batch) {
    problem.component_grad_into(i, x_curr, gi_curr.span());
    problem.component_grad_into(i, x_prev, gi_prev.span());
    gi_curr -= gi_prev;
    k.axpy(inv_b, gi_curr.data(), delta_g.data(), d);
  }
  states.grad.hat_g += delta_g;
  k.scal(1.0 - alpha, states.grad.g_ema.data(), d);
  k.axpy(alpha, states.grad.hat_g.data(), states.grad.g_ema.data(), d);

  if (auto* hat = std::get_if<Matrix>(&states.hess.hat_h)) {
    // Separate sums so that x_curr == x_prev gives an exactly zero increment.
    Matrix sum_curr(d, d);
    Matrix sum_prev(d, d);
    for (std::size_t i : batch) {
      problem.component_hessian_accumulate(i, x_curr, inv_b, sum_curr);
      problem.component_hessian_accumulate(i, x_prev, inv_b, sum_prev);
    }
    sum_curr -= sum_prev;
    *hat += sum_curr;
    Matrix& ema = std::get<Matrix>(states.hess.h_ema);
    ema *= 1.0 - alpha;
    add_scaled(ema, alpha, *hat);
  } else {
    if (ctx.rng == nullptr) throw std::invalid_argument("sarah_step: probe sketches need an rng");
    ProbeSketch& hat_sketch = std::get<ProbeSketch>(states.hess.hat_h);
    ProbeSketch delta(d, ctx.hutchinson.cap);
    std::uint64_t hvps = 0;
    for (std::size_t i : batch) {
      hvps += add_component_difference(delta, problem, i, x_curr, x_prev, inv_b, ctx.hutchinson.q,
                                       ctx.hutchinson.dist, *ctx.rng);
    }
    hat_sketch = ProbeSketch::combine(hat_sketch, 1.0, delta, 1.0);
    states.hess.h_ema =
        ProbeSketch::combine(std::get<ProbeSketch>(states.hess.h_ema), 1.0 - alpha, hat_sketch, alpha);
    if (ctx.counter) ctx.counter->hvp_raw += hvps;
  }

  states.grad.t = t;
  states.hess.t = t;
  if (ctx.counter) {
    const std::uint64_t b = batch.size();
    ctx.counter->grad_raw += 2 * b;
    ctx.counter->hess_raw += 2 * b;
    ctx.counter->grad_paper += b;
    ctx.counter->hess_paper += b;
  }
}

EstimatorErrors diagnostic_errors(const EstimatorStates& states, const FiniteSumProblem& problem,
                                  std::span<const double> x, OracleCounter* counter) {
  EstimatorErrors out;
  out.eps_norm = norm(states.grad.g_ema - problem.full_grad(x));
  const Matrix diff = repr_dense(states.hess.h_ema) - problem.full_hess_dense(x);
  out.sigma_frobenius = frobenius_norm(diff);
  if (out.sigma_frobenius > 0.0) {
    out.sigma_opnorm = lanczos_operator_norm(SymmetricOperator::dense(diff), problem.d(), 0x5eed);
  }
  if (counter) {
    counter->diagnostic_grad += problem.n();
    counter->diagnostic_hess += problem.n();
  }
  return out;
}

}  // namespace vrcn
