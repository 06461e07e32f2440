#include "vrcn/constants.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "vrcn/krylov.hpp"

namespace vrcn {

namespace {

Vector sample_point(std::mt19937_64& rng, const Vector& center, double radius) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = radius / std::sqrt(static_cast<double>(center.size()));
  Vector x = center;
  for (double& v : x) v += scale * normal(rng);
  return x;
}

}  // namespace

ProblemConstants estimate_constants(const FiniteSumProblem& problem, const EstimateOptions& options) {
  const std::size_t d = problem.d();
  const std::size_t n = problem.n();
  const Vector center = options.center.value_or(Vector(d));
  require_same_dim(d, center.size(), "estimate_constants center");
  std::mt19937_64 rng(options.seed);

  ProblemConstants out;
  double var_g = 0.0;
  double var_h = 0.0;
  Vector gi(d);
  for (std::size_t s = 0; s <= options.x_samples; ++s) {
    const Vector x = s == 0 ? center : sample_point(rng, center, options.radius);
    const Vector g = problem.full_grad(x);
    const Matrix h = problem.full_hess_dense(x);
    out.LH = std::max(out.LH, symmetric_operator_norm(h));
    double mg = 0.0;
    double mh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      problem.component_grad_into(i, x, gi.span());
      mg += norm_squared(gi - g);
      Matrix hi = h;
      hi *= -1.0;
      problem.component_hessian_accumulate(i, x, 1.0, hi);
      mh += norm_squared(hi.flat());
    }
    var_g = std::max(var_g, mg / static_cast<double>(n));
    var_h = std::max(var_h, mh / static_cast<double>(n));
  }
  out.sigma1 = std::sqrt(var_g);
  out.sigma2 = std::sqrt(var_h);

  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t p = 0; p < options.pair_samples; ++p) {
    const Vector x = p == 0 ? center : sample_point(rng, center, options.radius);
    Vector u(d);
    for (double& v : u) v = normal(rng);
    u *= options.pair_step / norm(u);
    const Vector y = x + u;
    const double dist = norm(y - x);
    if (dist == 0.0) continue;
    const Matrix diff = problem.full_hess_dense(x) - problem.full_hess_dense(y);
    out.L2 = std::max(out.L2, symmetric_operator_norm(diff) / dist);
  }
  return out;
}

ProblemConstants estimate_constants(const FiniteSumProblem& problem, std::size_t x_samples,
                                    std::size_t pair_samples, std::uint64_t seed) {
  EstimateOptions options;
  options.x_samples = x_samples;
  options.pair_samples = pair_samples;
  options.seed = seed;
  return estimate_constants(problem, options);
}

ResolvedConstants resolve_constants(const FiniteSumProblem& problem, const ResolveOptions& options) {
  const KnownConstants analytic = problem.analytic_constants();
  const ConstantOverrides& ov = options.overrides;
  const bool need_estimate = (!ov.L2 && !analytic.L2) || (!ov.LH && !analytic.LH) ||
                             (!ov.sigma1 && !analytic.sigma1) || (!ov.sigma2 && !analytic.sigma2);
  ProblemConstants estimated;
  if (need_estimate) estimated = estimate_constants(problem, options.estimate);

  ResolvedConstants out;
  auto pick = [&](const std::optional<double>& o, const std::optional<double>& a, double est,
                  double& value, ConstantSource& source, const char* name) {
    if (o) {
      value = *o;
      source = ConstantSource::Override;
    } else if (a) {
      value = *a;
      source = ConstantSource::Analytic;
    } else {
      value = options.safety * est;
      source = ConstantSource::Estimated;
    }
    if (!(value >= 0.0) || !std::isfinite(value)) {
      throw std::invalid_argument(std::string("constant ") + name + " must be finite and >= 0");
    }
  };
  pick(ov.L2, analytic.L2, estimated.L2, out.values.L2, out.L2_source, "L2");
  pick(ov.LH, analytic.LH, estimated.LH, out.values.LH, out.LH_source, "LH");
  pick(ov.sigma1, analytic.sigma1, estimated.sigma1, out.values.sigma1, out.sigma1_source, "sigma1");
  pick(ov.sigma2, analytic.sigma2, estimated.sigma2, out.values.sigma2, out.sigma2_source, "sigma2");
  out.values.R = ov.R;
  out.values.c_tilde_h = options.c_tilde_h;
  return out;
}

double default_distance_estimate(const Vector& x0) {
  const double r = norm(x0) + 1.0;
  spdlog::warn("no distance estimate R supplied; using ||x0|| + 1 = {}", r);
  return r;
}

std::string to_string(ConstantSource source) {
  switch (source) {
    case ConstantSource::Override:
      return "override";
    case ConstantSource::Analytic:
      return "analytic";
    case ConstantSource::Estimated:
      return "estimated";
  }
  return "unknown";
}

}  // namespace vrcn
