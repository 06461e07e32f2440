#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "vrcn/estimators.hpp"
#include "vrcn/stats.hpp"

using namespace vrcn;

namespace {

Vector random_vector(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> normal;
  Vector v(d);
  for (double& x : v) x = scale * normal(rng);
  return v;
}

ProblemPtr logistic(std::size_t n, std::size_t d, std::uint64_t seed) {
  return make_nonconvex_logistic(make_classification_dataset(n, d, 0.1, seed), 0.1);
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

TEST_CASE("alpha examples") {
  EmaSchedule s{0.5, {}};
  CHECK(s.alpha(3) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(s.alpha(1) == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(EmaSchedule{0.1, {}}.alpha(99) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK_THROWS(s.alpha(0));
  CHECK_THROWS(EmaSchedule{0.6, {}}.validate());
  CHECK_THROWS(EmaSchedule{0.0, {}}.validate());
  CHECK_NOTHROW(EmaSchedule{0.5, 1.0}.validate());
  CHECK(EmaSchedule{0.5, 1.0}.alpha(7) == 1.0);
}

TEST_CASE("ema weight examples") {
  const EmaSchedule s{0.5, {}};
  CHECK(ema_weights(s, 0) == std::vector<double>{1.0});
  const double a1 = 0.5 / std::sqrt(2.0), a2 = 0.5 / std::sqrt(3.0);
  const std::vector<double> w = ema_weights(s, 2);
  REQUIRE(w.size() == 3);
  CHECK(w[0] == doctest::Approx((1 - a1) * (1 - a2)).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(a1 * (1 - a2)).epsilon(1e-15));
  CHECK(w[2] == doctest::Approx(a2).epsilon(1e-15));
  CHECK(std::abs(w[0] + w[1] + w[2] - 1.0) <= 1e-15);
}

TEST_CASE("squared weights decay like (t+1)^(-1/2)") {
  // Sup over t <= 1e4 of sum_j w_j^2 sqrt(t+1) / c, from scripts/ema_weight_sup.py.
  // With the snapshot weight included, small c keeps most mass on w_0 for a while.
  const double expected_all[] = {14.550328476154341, 3.138309276622246, 1.535533905932738};
  const double expected_recursive[] = {0.7204364037722916, 0.645185026245545, 0.6381741511499641};
  const double cs[] = {0.1, 0.3, 0.5};
  for (int k = 0; k < 3; ++k) {
    const EmaSchedule s{cs[k], {}};
    double sup_all = 0.0, sup_rec = 0.0;
    for (std::size_t t = 1; t <= 10000; ++t) {
      const std::vector<double> w = ema_weights(s, t);
      double sum = 0.0, sq = 0.0;
      for (double x : w) {
        sum += x;
        sq += x * x;
      }
      if (t % 997 == 1) CHECK(std::abs(sum - 1.0) <= 1e-12);
      const double scale = std::sqrt(t + 1.0) / cs[k];
      sup_all = std::max(sup_all, sq * scale);
      sup_rec = std::max(sup_rec, (sq - w[0] * w[0]) * scale);
    }
    CHECK(sup_all == doctest::Approx(expected_all[k]).epsilon(1e-9));
    CHECK(sup_rec == doctest::Approx(expected_recursive[k]).epsilon(1e-9));
  }
  // Doubling t shrinks the sum of squares by about 2^(-1/2) once the snapshot weight is gone.
  const EmaSchedule s{0.5, {}};
  auto sq = [&](std::size_t t) {
    double acc = 0.0;
    for (double x : ema_weights(s, t)) acc += x * x;
    return acc;
  };
  CHECK(sq(8000) / sq(4000) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.02));
}

TEST_CASE("snapshot is exact in dense mode") {
  const ProblemPtr p = logistic(40, 5, 1);
  std::mt19937_64 rng(1);
  const Vector x0 = random_vector(rng, 5);
  OracleCounter counter;
  EstimatorContext ctx;
  ctx.counter = &counter;
  const EstimatorStates s = snapshot(*p, x0, ctx);
  CHECK(norm(s.grad.hat_g - p->full_grad(x0)) == 0.0);
  CHECK(s.grad.g_ema == s.grad.hat_g);
  const Matrix& h = std::get<Matrix>(s.hess.hat_h);
  CHECK(is_symmetric(h));
  CHECK(frobenius_norm(h - p->full_hess_dense(x0)) == 0.0);
  CHECK(counter.grad_raw == 40);
  CHECK(counter.hess_paper == 40);
  const EstimatorErrors e = diagnostic_errors(s, *p, x0, &counter);
  CHECK(e.eps_norm == 0.0);
  CHECK(e.sigma_opnorm == 0.0);
  CHECK(counter.diagnostic_grad == 40);
  CHECK(counter.grad_raw == 40);
}

TEST_CASE("full batch keeps the recursive estimate exact") {
  const ProblemPtr p = logistic(30, 4, 2);
  std::mt19937_64 rng(2);
  Vector x = random_vector(rng, 4);
  EstimatorContext ctx;
  EstimatorStates s = snapshot(*p, x, ctx);
  const EmaSchedule fixed{0.5, 1.0};
  const std::vector<std::size_t> batch = all_indices(30);
  for (std::size_t t = 1; t <= 20; ++t) {
    const Vector next = axpy(1.0, random_vector(rng, 4, 0.1), x);
    sarah_step(s, *p, x, next, batch, fixed, t, ctx);
    x = next;
    CHECK(norm(s.grad.hat_g - p->full_grad(x)) <= 1e-12);
    const EstimatorErrors e = diagnostic_errors(s, *p, x);
    CHECK(e.eps_norm <= 1e-12);
    CHECK(e.sigma_opnorm <= e.sigma_frobenius + 1e-12);
  }
}

TEST_CASE("zero displacement only mixes") {
  const ProblemPtr p = logistic(20, 3, 3);
  std::mt19937_64 rng(3);
  const Vector x0 = random_vector(rng, 3);
  EstimatorContext ctx;
  EstimatorStates s = snapshot(*p, x0, ctx);
  const Vector x1 = axpy(1.0, Vector{0.3, -0.2, 0.1}, x0);
  sarah_step(s, *p, x0, x1, std::vector<std::size_t>{0, 5, 7}, EmaSchedule{}, 1, ctx);
  const EstimatorStates before = s;
  sarah_step(s, *p, x1, x1, std::vector<std::size_t>{1, 2, 3}, EmaSchedule{}, 2, ctx);
  CHECK(s.grad.hat_g == before.grad.hat_g);
  CHECK(frobenius_norm(std::get<Matrix>(s.hess.hat_h) - std::get<Matrix>(before.hess.hat_h)) == 0.0);
  const double a = EmaSchedule{}.alpha(2);
  const Vector mixed = axpy(a, before.grad.hat_g, scale(1 - a, before.grad.g_ema));
  CHECK(norm(s.grad.g_ema - mixed) <= 1e-15);
}

TEST_CASE("sarah_step argument checks and accounting") {
  const ProblemPtr p = logistic(10, 3, 4);
  const Vector x(3);
  OracleCounter counter;
  EstimatorContext ctx;
  ctx.counter = &counter;
  EstimatorStates s = snapshot(*p, x, ctx);
  CHECK_THROWS(sarah_step(s, *p, x, x, std::vector<std::size_t>{0}, EmaSchedule{}, 2, ctx));
  CHECK_THROWS_AS(sarah_step(s, *p, x, x, std::vector<std::size_t>{10}, EmaSchedule{}, 1, ctx),
                  std::out_of_range);
  sarah_step(s, *p, x, x, std::vector<std::size_t>{0, 1, 1, 4}, EmaSchedule{}, 1, ctx);
  CHECK(counter.grad_raw == 10 + 8);
  CHECK(counter.hess_raw == 10 + 8);
  CHECK(counter.grad_paper == 10 + 4);
  CHECK(counter.hess_paper == 10 + 4);
}

TEST_CASE("recursive increments are unbiased") {
  const ProblemPtr p = logistic(50, 4, 5);
  std::mt19937_64 rng(5);
  const Vector x0 = random_vector(rng, 4);
  const Vector x1 = axpy(1.0, random_vector(rng, 4, 0.3), x0);
  const Vector truth = p->full_grad(x1) - p->full_grad(x0);
  const std::size_t trials = 10000, b = 4;
  std::vector<std::vector<double>> samples(4, std::vector<double>(trials));
  EstimatorContext ctx;
  const EstimatorStates base = snapshot(*p, x0, ctx);
  for (std::size_t k = 0; k < trials; ++k) {
    EstimatorStates s = base;
    const auto batch = sample_batch(50, b, Sampling::WithReplacement, rng);
    sarah_step(s, *p, x0, x1, batch, EmaSchedule{}, 1, ctx);
    const Vector delta = s.grad.hat_g - base.grad.hat_g;
    for (std::size_t i = 0; i < 4; ++i) samples[i][k] = delta[i];
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const MeanStd ms = mean_std(samples[i]);
    CHECK(std::abs(ms.mean - truth[i]) <= 3.0 * ms.stderr_mean);
  }
}

TEST_CASE("increment variance scales like 1/b") {
  const ProblemPtr p = logistic(64, 5, 6);
  std::mt19937_64 rng(6);
  const Vector x0 = random_vector(rng, 5);
  const Vector x1 = axpy(1.0, random_vector(rng, 5, 0.3), x0);
  const Vector truth = p->full_grad(x1) - p->full_grad(x0);
  EstimatorContext ctx;
  const EstimatorStates base = snapshot(*p, x0, ctx);
  std::vector<double> bs{1, 4, 16, 64}, var;
  for (double bd : bs) {
    double acc = 0.0;
    const std::size_t trials = 4000;
    for (std::size_t k = 0; k < trials; ++k) {
      EstimatorStates s = base;
      sarah_step(s, *p, x0, x1, sample_batch(64, static_cast<std::size_t>(bd), Sampling::WithReplacement, rng),
                 EmaSchedule{}, 1, ctx);
      acc += norm_squared(s.grad.hat_g - base.grad.hat_g - truth);
    }
    var.push_back(acc / trials);
  }
  const LineFit fit = fit_loglog(bs, var);
  CHECK(std::abs(fit.slope + 1.0) <= 0.15);
}

TEST_CASE("moving average equals the weighted sum of recursive estimates") {
  const ProblemPtr p = logistic(25, 3, 7);
  std::mt19937_64 rng(7);
  Vector x = random_vector(rng, 3);
  EstimatorContext ctx;
  EstimatorStates s = snapshot(*p, x, ctx);
  const EmaSchedule sched{0.3, {}};
  std::vector<Vector> hats{s.grad.hat_g};
  for (std::size_t t = 1; t <= 100; ++t) {
    const Vector next = axpy(1.0, random_vector(rng, 3, 0.05), x);
    sarah_step(s, *p, x, next, sample_batch(25, 5, Sampling::WithReplacement, rng), sched, t, ctx);
    hats.push_back(s.grad.hat_g);
    x = next;
  }
  const std::vector<double> w = ema_weights(sched, 100);
  Vector recon(3);
  for (std::size_t j = 0; j <= 100; ++j) axpy_inplace(w[j], hats[j], recon.span());
  CHECK(norm(recon - s.grad.g_ema) <= 1e-12 * (1 + norm(recon)));
}

TEST_CASE("sampling modes") {
  std::mt19937_64 rng(8);
  const auto full = sample_batch(5, 5, Sampling::FullPass, rng);
  CHECK(full == std::vector<std::size_t>{0, 1, 2, 3, 4});
  auto wo = sample_batch(10, 10, Sampling::WithoutReplacement, rng);
  std::sort(wo.begin(), wo.end());
  CHECK(wo == all_indices(10));
  CHECK_THROWS(sample_batch(5, 6, Sampling::WithoutReplacement, rng));
  CHECK_THROWS(sample_batch(5, 4, Sampling::FullPass, rng));
  for (std::size_t i : sample_batch(7, 100, Sampling::WithReplacement, rng)) CHECK(i < 7);
}

TEST_CASE("probe-sketch backend") {
  const ProblemPtr p = logistic(30, 4, 9);
  std::mt19937_64 rng(9);
  Vector x = random_vector(rng, 4);
  OracleCounter counter;
  EstimatorContext ctx;
  ctx.backend = HessianBackend::Hutchinson;
  ctx.hutchinson.q = 4;
  ctx.rng = &rng;
  ctx.counter = &counter;
  EstimatorStates s = snapshot(*p, x, ctx);
  CHECK(std::holds_alternative<ProbeSketch>(s.hess.hat_h));
  CHECK(counter.hvp_raw == 30 * 16);
  const Vector next = axpy(1.0, Vector{0.1, 0.1, 0, 0}, x);
  sarah_step(s, *p, x, next, std::vector<std::size_t>{0, 3, 5}, EmaSchedule{}, 1, ctx);
  CHECK(counter.hvp_raw == 30 * 16 + 3 * 8);
  CHECK(counter.hess_paper == 33);
  // The error against the true Hessian stays moderate with 16 snapshot probes.
  const EstimatorErrors e = diagnostic_errors(s, *p, next);
  CHECK(e.sigma_opnorm <= e.sigma_frobenius + 1e-12);
  CHECK(e.sigma_frobenius < frobenius_norm(p->full_hess_dense(next)) * 2.0);
  EstimatorContext no_rng = ctx;
  no_rng.rng = nullptr;
  CHECK_THROWS(snapshot(*p, x, no_rng));
}
