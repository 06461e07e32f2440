#include "vrcn/verification.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "vrcn/constants.hpp"
#include "vrcn/estimators.hpp"
#include "vrcn/hutchinson.hpp"
#include "vrcn/krylov.hpp"
#include "vrcn/rng.hpp"
#include "vrcn/stats.hpp"

namespace vrcn {

namespace {

using Clock = std::chrono::steady_clock;

Vector gaussian(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> normal;
  Vector v(d);
  for (double& x : v) x = scale * normal(rng);
  return v;
}

Vector unit(std::mt19937_64& rng, std::size_t d) {
  Vector v = gaussian(rng, d);
  return (1.0 / norm(v)) * v;
}

std::string fmt_num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

template <typename F>
CheckResult timed(F&& body) {
  const auto start = Clock::now();
  CheckResult r = body();
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

// Runs body(i) for i in [0, count) on up to hardware_concurrency threads.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(count, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> futures;
  for (std::size_t w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    }));
  }
  for (auto& f : futures) f.get();
}

// r = g + (H + beta I) s + (M/2)||s|| s, evaluated without the library's model helpers.
Vector residual(const CubicModel& m, std::span<const double> s) {
  Vector r = m.H.apply(s);
  const double ns = norm(s);
  const double shift = m.beta + 0.5 * m.M * ns;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += m.g[i] + shift * s[i];
  return r;
}

double quad_form(const CubicModel& m, std::span<const double> s) {
  return dot(s, m.H.apply(s)) + m.beta * norm_squared(s);
}

double model_direct(const CubicModel& m, std::span<const double> s) {
  const double ns = norm(s);
  return dot(m.g, s) + 0.5 * quad_form(m, s) + m.M / 6.0 * ns * ns * ns;
}

double ratio_statistic(const std::vector<double>& sum, const std::vector<double>& sumsq,
                       const std::vector<double>& truth, std::size_t trials) {
  const double k = static_cast<double>(trials);
  double dev = 0.0;
  double trace = 0.0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const double mean = sum[j] / k;
    const double var = std::max(0.0, (sumsq[j] - k * mean * mean) / (k - 1.0));
    dev += (mean - truth[j]) * (mean - truth[j]);
    trace += var;
  }
  if (trace == 0.0) return dev == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return dev * k / trace;
}

}  // namespace

Matrix random_symmetric_with_spectrum(std::mt19937_64& rng, std::span<const double> spectrum) {
  const std::size_t d = spectrum.size();
  std::vector<Vector> q;
  while (q.size() < d) {
    Vector v = gaussian(rng, d);
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vector& u : q) axpy_inplace(-dot(u, v), u, v.span());
    }
    const double nv = norm(v);
    if (nv < 1e-8) continue;
    q.push_back((1.0 / nv) * v);
  }
  Matrix m(d, d);
  for (std::size_t k = 0; k < d; ++k) add_outer(m, spectrum[k], q[k]);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i) = 0.5 * (m(i, j) + m(j, i));
  return m;
}

CubicModel random_cubic_model(std::mt19937_64& rng, std::size_t d, double beta) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> spec(d);
  for (double& s : spec) s = u(rng);
  std::uniform_real_distribution<double> mu(0.5, 4.0);
  Vector g = gaussian(rng, d);
  Matrix h = random_symmetric_with_spectrum(rng, spec);
  return CubicModel{std::move(g), SymmetricOperator::dense(std::move(h)), beta, mu(rng)};
}

CheckResult check_identity_suite(std::size_t instances, std::uint64_t seed) {
  return timed([&] {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> log_scale(-3.0, 2.0);
    double worst = 0.0;
    double worst_library = 0.0;
    for (std::size_t k = 0; k < instances; ++k) {
      const std::size_t d = 1 + k % 50;
      CubicModel m = random_cubic_model(rng, d, k % 2 ? 1.0 : 0.0);
      if (k % 10 == 3) m.M = 1e-6;
      const Vector s = k == 0 ? Vector(d) : gaussian(rng, d, std::pow(10.0, log_scale(rng)));
      const double ns = norm(s);
      const Vector r = residual(m, s);
      const double lhs = model_direct(m, s);
      const double rhs = dot(r, s) - 0.5 * quad_form(m, s) - m.M / 3.0 * ns * ns * ns;
      const double scale = std::abs(dot(m.g, s)) + 0.5 * std::abs(quad_form(m, s)) + m.M / 6.0 * ns * ns * ns;
      const double defect = scale == 0.0 ? std::abs(lhs - rhs) : std::abs(lhs - rhs) / scale;
      const double lib = scale == 0.0 ? identity_check(m, s) : identity_check(m, s) / scale;
      worst = std::max(worst, defect);
      worst_library = std::max(worst_library, lib);
    }
    CheckResult res;
    res.name = "model identity";
    res.measured = {worst, worst_library};
    res.bound = {1e-10, 1e-10};
    res.passed = worst <= 1e-10 && worst_library <= 1e-10;
    res.details = std::to_string(instances) + " instances, d in 1..50, M = 1e-6 on every tenth; max relative defect " +
                  fmt_num(worst) + " (direct), " + fmt_num(worst_library) + " (library)";
    return res;
  });
}

CheckResult check_model_upper(std::size_t instances, std::span<const double> theta_grid, std::uint64_t seed) {
  return timed([&] {
    std::mt19937_64 rng(seed);
    std::size_t checked = 0;
    std::size_t violations = 0;
    std::size_t skipped = 0;
    std::size_t exact_not_strict = 0;
    double worst_margin = -std::numeric_limits<double>::infinity();
    for (double theta : theta_grid) {
      SolverConfig cfg;
      cfg.theta = theta;
      for (std::size_t k = 0; k < instances; ++k) {
        const CubicModel m = random_cubic_model(rng, 1 + k % 20, k % 3 == 0 ? 1.0 : 0.0);
        const double hnorm = symmetric_operator_norm(m.H.shifted(m.beta).materialize());
        auto bound_of = [&](const Vector& s) {
          const double ns = norm(s);
          return -(m.M / 12.0) * (1.0 - 2.0 * theta) * ns * ns * ns + 0.5 * hnorm * ns * ns;
        };
        const SubproblemSolution sol = solve(m, cfg);
        const Vector r = residual(m, sol.s);
        const double ns = norm(sol.s);
        const bool inexact_ok = norm(r) <= theta * 0.5 * m.M * ns * ns && dot(r, sol.s) >= -theta * m.M / 6.0 * ns * ns * ns;
        if (!inexact_ok || ns == 0.0) {
          ++skipped;
          continue;
        }
        ++checked;
        const double value = model_direct(m, sol.s);
        const double margin = value - bound_of(sol.s);
        worst_margin = std::max(worst_margin, margin / std::max(1.0, std::abs(bound_of(sol.s))));
        if (margin > 0.0) ++violations;

        const SubproblemSolution exact = solve_exact_reference(m);
        if (norm(exact.s) > 0.0 && !(model_direct(m, exact.s) < bound_of(exact.s))) ++exact_not_strict;
      }
    }
    CheckResult res;
    res.name = "model upper bound";
    res.measured = {static_cast<double>(violations), static_cast<double>(exact_not_strict), worst_margin,
                    static_cast<double>(checked)};
    res.bound = {0.0, 0.0, 0.0, static_cast<double>(theta_grid.size() * instances)};
    res.passed = violations == 0 && exact_not_strict == 0 && checked > 0;
    res.details = std::to_string(checked) + " solver steps checked (" + std::to_string(skipped) +
                  " skipped: zero step or conditions unmet), " + std::to_string(violations) + " violations, " +
                  std::to_string(exact_not_strict) + " exact steps not strict; worst relative margin " +
                  fmt_num(worst_margin);
    return res;
  });
}

CheckResult check_oracle_equivalence(std::size_t instances, double theta, std::uint64_t seed) {
  return timed([&] {
    std::mt19937_64 rng(seed);
    SolverConfig cfg;
    cfg.theta = theta;
    const std::size_t dims[] = {2, 5, 20, 50};
    double worst_step = 0.0;
    double worst_value = 0.0;
    std::size_t failed_conditions = 0;
    for (std::size_t k = 0; k < instances; ++k) {
      const CubicModel m = random_cubic_model(rng, dims[k % 4], (k / 4) % 2 ? 1.0 : 0.0);
      const SubproblemSolution a = solve(m, cfg);
      const SubproblemSolution b = solve_exact_reference(m);
      if (!check_inexactness(m, a.s, theta).ok()) ++failed_conditions;
      const double nb = norm(b.s);
      const double step_err = std::abs(norm(a.s) - nb) / std::max(nb, 1e-300);
      worst_step = std::max(worst_step, step_err);
      worst_value = std::max(worst_value, std::abs(a.model_value - b.model_value));
    }
    CheckResult res;
    res.name = "subproblem oracle equivalence";
    res.measured = {worst_step, worst_value, static_cast<double>(failed_conditions)};
    res.bound = {1e-5, 1e-8, 0.0};
    res.passed = worst_step <= 1e-5 && worst_value <= 1e-8 && failed_conditions == 0;
    res.details = std::to_string(instances) + " instances at theta = " + fmt_num(theta) +
                  ": max relative step-norm error " + fmt_num(worst_step) + ", max model-value error " +
                  fmt_num(worst_value);
    return res;
  });
}

EmaWeightStats ema_weight_stats(double c, std::size_t t_max) {
  EmaSchedule sched;
  sched.c = c;
  EmaWeightStats st;
  st.c = c;
  double s_half = 0.0;
  double s_full = 0.0;
  for (std::size_t t = 1; t <= t_max; ++t) {
    const std::vector<double> w = ema_weights(sched, t);
    double sum = 0.0;
    double sq_rec = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      sum += w[j];
      if (j > 0) sq_rec += w[j] * w[j];
    }
    const double sq = sq_rec + w[0] * w[0];
    const double lit = sq_rec + (c * w[0]) * (c * w[0]);
    const double scale = std::sqrt(static_cast<double>(t + 1)) / c;
    if (sq * scale > st.sup) {
      st.sup = sq * scale;
      st.argsup = t;
    }
    st.sup_recursive = std::max(st.sup_recursive, sq_rec * scale);
    st.sup_alpha0 = std::max(st.sup_alpha0, lit * scale);
    st.max_sum_defect = std::max(st.max_sum_defect, std::abs(sum - 1.0));
    if (t == t_max / 2) s_half = sq;
    if (t == t_max) s_full = sq;
  }
  st.doubling_ratio = s_half > 0.0 ? s_full / s_half : 0.0;
  return st;
}

CheckResult check_ema_weight_bound(std::span<const double> c_grid, std::size_t t_max, double bound) {
  return timed([&] {
    CheckResult res;
    res.name = "moving-average weight bound";
    res.passed = true;
    std::ostringstream details;
    details << "t <= " << t_max << ";";
    for (double c : c_grid) {
      const EmaWeightStats st = ema_weight_stats(c, t_max);
      res.measured.push_back(st.sup);
      res.bound.push_back(bound);
      res.measured.push_back(st.max_sum_defect);
      res.bound.push_back(1e-12);
      if (!(st.sup <= bound) || !(st.max_sum_defect <= 1e-12)) res.passed = false;
      details << " c=" << c << ": sup " << fmt_num(st.sup) << " at t=" << st.argsup << ", without snapshot weight "
              << fmt_num(st.sup_recursive) << ", with alpha_0 snapshot weight " << fmt_num(st.sup_alpha0)
              << ", doubling ratio " << fmt_num(st.doubling_ratio) << ", weight-sum defect "
              << fmt_num(st.max_sum_defect) << ";";
    }
    res.details = details.str();
    return res;
  });
}

CheckResult check_variance_scalings(const FiniteSumProblem& problem, const VarianceOptions& opt, std::uint64_t seed) {
  return timed([&] {
    const std::size_t n = problem.n();
    const std::size_t d = problem.d();
    std::mt19937_64 rng(seed);
    const Vector x0 = gaussian(rng, d, 0.5);
    const Vector u = unit(rng, d);
    EstimatorContext ctx;
    const EstimatorStates base = snapshot(problem, x0, ctx);
    const Matrix base_h = repr_dense(base.hess.hat_h);

    // Mean squared error of one recursive increment against the exact difference.
    auto increment_error = [&](const Vector& x1, std::size_t b, std::mt19937_64& local) {
      const Vector truth_g = problem.full_grad(x1) - problem.full_grad(x0);
      const Matrix truth_h = problem.full_hess_dense(x1) - problem.full_hess_dense(x0);
      double eg = 0.0;
      double eh = 0.0;
      for (std::size_t k = 0; k < opt.trials; ++k) {
        EstimatorStates s = base;
        sarah_step(s, problem, x0, x1, sample_batch(n, b, Sampling::WithReplacement, local), EmaSchedule{}, 1, ctx);
        eg += norm_squared(s.grad.hat_g - base.grad.hat_g - truth_g);
        const Matrix dh = repr_dense(s.hess.hat_h) - base_h - truth_h;
        eh += frobenius_norm(dh) * frobenius_norm(dh);
      }
      return std::pair<double, double>{eg / opt.trials, eh / opt.trials};
    };

    std::vector<double> gb, hb, gs, hs, hq;
    const Vector x_fixed = axpy(0.1, u, x0);
    for (double b : opt.batch_sizes) {
      std::mt19937_64 local(derive_seed(seed, 10));
      const auto [eg, eh] = increment_error(x_fixed, static_cast<std::size_t>(b), local);
      gb.push_back(eg);
      hb.push_back(eh);
    }
    for (double r : opt.step_norms) {
      std::mt19937_64 local(derive_seed(seed, 11));
      const auto [eg, eh] = increment_error(axpy(r, u, x0), opt.b, local);
      gs.push_back(eg);
      hs.push_back(eh);
    }
    for (double q : opt.probe_counts) {
      std::mt19937_64 local(derive_seed(seed, 12));
      hq.push_back(hutchinson_difference_error(problem, x0, x_fixed, n, static_cast<std::size_t>(q), opt.probe_trials,
                                               ProbeDistribution::Rademacher, local));
    }
    const double s_gb = fit_loglog(opt.batch_sizes, gb).slope;
    const double s_hb = fit_loglog(opt.batch_sizes, hb).slope;
    const double s_gs = fit_loglog(opt.step_norms, gs).slope;
    const double s_hs = fit_loglog(opt.step_norms, hs).slope;
    const double s_hq = fit_loglog(opt.probe_counts, hq).slope;
    CheckResult res;
    res.name = "variance scalings";
    res.measured = {s_gb, s_hb, s_gs, s_hs, s_hq};
    res.bound = {-1.0, -1.0, 2.0, 2.0, -1.0};
    res.passed = true;
    for (std::size_t i = 0; i < res.measured.size(); ++i) {
      if (!(std::abs(res.measured[i] - res.bound[i]) <= opt.tolerance)) res.passed = false;
    }
    res.details = "log-log slopes (target +/- " + fmt_num(opt.tolerance) + "): gradient vs b " + fmt_num(s_gb) +
                  ", Hessian vs b " + fmt_num(s_hb) + ", gradient vs ||s|| " + fmt_num(s_gs) + ", Hessian vs ||s|| " +
                  fmt_num(s_hs) + ", probe sketch vs q " + fmt_num(s_hq);
    return res;
  });
}

CheckResult check_martingale_unbiasedness(const FiniteSumProblem& problem, std::size_t trials, std::uint64_t seed) {
  return timed([&] {
    const std::size_t n = problem.n();
    const std::size_t d = problem.d();
    std::mt19937_64 rng(seed);
    const Vector x0 = gaussian(rng, d, 0.5);
    const Vector x1 = axpy(0.3, unit(rng, d), x0);
    EstimatorContext ctx;
    const EstimatorStates base = snapshot(problem, x0, ctx);
    const Matrix base_h = repr_dense(base.hess.hat_h);
    const Vector truth_g = problem.full_grad(x1) - problem.full_grad(x0);
    const Matrix truth_h = problem.full_hess_dense(x1) - problem.full_hess_dense(x0);
    std::vector<double> tg(truth_g.begin(), truth_g.end());
    std::vector<double> th(d * d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) th[i * d + j] = truth_h(i, j);
    std::vector<double> sg(d), qg(d), sh(d * d), qh(d * d);
    const std::size_t b = std::max<std::size_t>(1, std::min<std::size_t>(4, n));
    for (std::size_t k = 0; k < trials; ++k) {
      EstimatorStates s = base;
      sarah_step(s, problem, x0, x1, sample_batch(n, b, Sampling::WithReplacement, rng), EmaSchedule{}, 1, ctx);
      const Vector dg = s.grad.hat_g - base.grad.hat_g;
      const Matrix dh = repr_dense(s.hess.hat_h) - base_h;
      for (std::size_t i = 0; i < d; ++i) {
        sg[i] += dg[i];
        qg[i] += dg[i] * dg[i];
        for (std::size_t j = 0; j < d; ++j) {
          sh[i * d + j] += dh(i, j);
          qh[i * d + j] += dh(i, j) * dh(i, j);
        }
      }
    }
    const double stat_g = ratio_statistic(sg, qg, tg, trials);
    const double stat_h = ratio_statistic(sh, qh, th, trials);
    CheckResult res;
    res.name = "recursive increment unbiasedness";
    res.measured = {stat_g, stat_h};
    res.bound = {9.0, 9.0};
    res.passed = stat_g <= 9.0 && stat_h <= 9.0;
    res.details = std::to_string(trials) + " batches of size " + std::to_string(b) +
                  "; ||mean - truth||^2 / (tr Cov / trials): gradient " + fmt_num(stat_g) + ", Hessian " +
                  fmt_num(stat_h) + " (expected about 1)";
    return res;
  });
}

CheckResult check_hutchinson_unbiasedness(const FiniteSumProblem& problem, std::size_t samples, std::uint64_t seed) {
  return timed([&] {
    const std::size_t d = problem.d();
    std::mt19937_64 rng(seed);
    const Vector x = gaussian(rng, d, 0.5);
    const Vector v = gaussian(rng, d);
    const Vector truth_v = problem.component_hvp(0, x, v);
    std::vector<double> truth(truth_v.begin(), truth_v.end());
    CheckResult res;
    res.name = "probe sketch unbiasedness";
    res.passed = true;
    std::ostringstream details;
    details << samples << " single-probe sketches of one component applied to a fixed vector;";
    for (ProbeDistribution dist : {ProbeDistribution::Rademacher, ProbeDistribution::Gaussian}) {
      std::vector<double> sum(d), sumsq(d);
      for (std::size_t k = 0; k < samples; ++k) {
        const Vector y = sketch_component(problem, 0, x, 1, dist, rng).apply(v);
        for (std::size_t i = 0; i < d; ++i) {
          sum[i] += y[i];
          sumsq[i] += y[i] * y[i];
        }
      }
      const double stat = ratio_statistic(sum, sumsq, truth, samples);
      res.measured.push_back(stat);
      res.bound.push_back(9.0);
      if (!(stat <= 9.0)) res.passed = false;
      details << (dist == ProbeDistribution::Rademacher ? " Rademacher " : " Gaussian ") << fmt_num(stat);
    }
    res.details = details.str();
    return res;
  });
}

CheckResult check_one_step_bound(const FiniteSumProblem& problem, const ProblemConstants& constants,
                                 const Vector& x0, std::size_t steps) {
  return timed([&] {
    RunConfig cfg;
    cfg.x0 = x0;
    cfg.inner = steps;
    cfg.epsilon = 1e-8;
    cfg.log_F = true;
    cfg.theta = 0.01;
    const RunResult r = run_baseline(problem, Baseline::FullCRN, cfg, constants);
    double prev = problem.full_value(x0);
    double worst = -std::numeric_limits<double>::infinity();
    std::size_t violations = 0;
    std::size_t checked = 0;
    for (const IterRecord& rec : r.trace) {
      if (rec.accepted) {
        const double s3 = rec.step_norm * rec.step_norm * rec.step_norm;
        const double excess = *rec.F - (prev + rec.model_value - (r.summary.M - constants.L2) / 6.0 * s3);
        worst = std::max(worst, excess);
        if (excess > 1e-8) ++violations;
        ++checked;
      }
      prev = *rec.F;
    }
    CheckResult res;
    res.name = "one-step descent bound";
    res.measured = {worst, static_cast<double>(violations), static_cast<double>(checked)};
    res.bound = {1e-8, 0.0, static_cast<double>(steps)};
    res.passed = violations == 0 && checked > 0;
    res.details = std::to_string(checked) + " exact-oracle steps; max of F(x+s) - F(x) - m(s) + (M-L2)/6 ||s||^3 = " +
                  fmt_num(worst);
    return res;
  });
}

SospOutcome check_sosp_at_termination(std::span<const SospCase> cases, std::size_t runs, std::uint64_t seed,
                                      const StepObserver& observer) {
  SospOutcome out;
  out.result = timed([&] {
    std::vector<SospRun> all(cases.size() * runs);
    std::vector<std::string> errors(all.size());
    parallel_for(all.size(), [&](std::size_t idx) {
      const std::size_t ci = idx / runs;
      const std::size_t ri = idx % runs;
      const SospCase& c = cases[ci];
      const std::uint64_t run_seed = derive_seed(seed, ci * 100003 + ri);
      std::mt19937_64 rng(derive_seed(run_seed, 3));
      RunConfig cfg = c.config;
      cfg.seed = run_seed;
      cfg.x0 = gaussian(rng, c.problem->d(), c.x0_scale);
      if (observer) cfg.observer = observer;
      SospRun& rec = all[idx];
      rec.case_name = c.name;
      rec.seed = run_seed;
      try {
        const RunResult r = run(*c.problem, Regime::NonconvexPlain, cfg, c.constants);
        rec.terminated_by = r.summary.terminated_by;
        rec.grad_norm = r.summary.final_grad_norm;
        rec.lambda_min = r.summary.final_lambda_min;
        rec.iterations = r.summary.iterations;
        rec.accounting_ok = check_accounting(r, c.problem->n()).passed;
      } catch (const std::exception& e) {
        errors[idx] = e.what();
      }
    });
    CheckResult res;
    res.name = "second-order stationarity at termination";
    res.passed = true;
    std::ostringstream details;
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
      const SospCase& c = cases[ci];
      const double eps = c.config.epsilon;
      const double lam_bound = -std::sqrt(c.constants.L2 * eps);
      double sum_g = 0.0, sum_l = 0.0, worst_g = 0.0, worst_l = std::numeric_limits<double>::infinity();
      std::size_t stopped = 0;
      std::size_t failed = 0;
      for (std::size_t ri = 0; ri < runs; ++ri) {
        const std::size_t idx = ci * runs + ri;
        if (!errors[idx].empty()) {
          ++failed;
          continue;
        }
        const SospRun& r = all[idx];
        if (r.terminated_by != Termination::StepNorm) continue;
        ++stopped;
        sum_g += r.grad_norm;
        sum_l += r.lambda_min;
        worst_g = std::max(worst_g, r.grad_norm);
        worst_l = std::min(worst_l, r.lambda_min);
      }
      const double mean_g = stopped ? sum_g / stopped : std::numeric_limits<double>::quiet_NaN();
      const double mean_l = stopped ? sum_l / stopped : std::numeric_limits<double>::quiet_NaN();
      const bool ok = failed == 0 && stopped > 0 && mean_g <= eps && mean_l >= lam_bound && worst_g <= 5 * eps &&
                      worst_l >= 2 * lam_bound;
      if (!ok) res.passed = false;
      res.measured.insert(res.measured.end(), {mean_g, worst_g, mean_l, worst_l, static_cast<double>(stopped)});
      res.bound.insert(res.bound.end(), {eps, 5 * eps, lam_bound, 2 * lam_bound, static_cast<double>(runs)});
      details << c.name << ": " << stopped << "/" << runs << " stopped by step norm";
      if (failed) details << ", " << failed << " errors";
      details << ", mean ||grad F|| " << fmt_num(mean_g) << " (bound " << fmt_num(eps) << "), worst "
              << fmt_num(worst_g) << " (bound " << fmt_num(5 * eps) << "), mean lambda_min " << fmt_num(mean_l)
              << " (bound " << fmt_num(lam_bound) << "), worst " << fmt_num(worst_l) << " (bound "
              << fmt_num(2 * lam_bound) << "); ";
    }
    for (const std::string& e : errors) {
      if (!e.empty()) {
        details << "first error: " << e;
        break;
      }
    }
    res.details = details.str();
    out.runs = std::move(all);
    return res;
  });
  return out;
}

void InexactnessAudit::observe(const StepAudit& audit) {
  const CubicModel& m = *audit.model;
  const SubproblemSolution& sol = *audit.solution;
  std::lock_guard<std::mutex> lock(mu_);
  ++steps_;
  if (!audit.accepted) return;
  ++accepted_;
  const double ns = norm(sol.s);
  if (ns == 0.0 && sol.status == SolveStatus::GradientZero) {
    ++exempt_;
    return;
  }
  const Vector r = residual(m, sol.s);
  const double norm_bound = audit.theta * 0.5 * m.M * ns * ns;
  const double dir_bound = audit.theta * m.M / 6.0 * ns * ns * ns;
  const double rn = norm(r);
  const double rs = dot(r, sol.s);
  worst_norm_ratio_ = std::max(worst_norm_ratio_, norm_bound > 0.0 ? rn / norm_bound : rn);
  worst_dir_ratio_ = std::max(worst_dir_ratio_, dir_bound > 0.0 ? -rs / dir_bound : -rs);
  if (!(rn <= norm_bound) || !(rs >= -dir_bound)) {
    if (violations_ == 0) {
      std::ostringstream os;
      os << "epoch " << audit.epoch << ", t " << audit.t << ": ||r|| " << rn << " vs " << norm_bound << ", r^T s "
         << rs << " vs " << -dir_bound;
      first_violation_ = os.str();
    }
    ++violations_;
  }
}

StepObserver InexactnessAudit::observer() {
  return [this](const StepAudit& a) { observe(a); };
}

std::size_t InexactnessAudit::accepted() const {
  std::lock_guard<std::mutex> lock(mu_);
  return accepted_;
}

std::size_t InexactnessAudit::violations() const {
  std::lock_guard<std::mutex> lock(mu_);
  return violations_;
}

CheckResult InexactnessAudit::result(const std::string& name) const {
  std::lock_guard<std::mutex> lock(mu_);
  CheckResult res;
  res.name = name;
  res.measured = {static_cast<double>(violations_), worst_norm_ratio_, worst_dir_ratio_,
                  static_cast<double>(accepted_)};
  res.bound = {0.0, 1.0, 1.0, static_cast<double>(steps_)};
  res.passed = violations_ == 0 && accepted_ > 0;
  std::ostringstream os;
  os << accepted_ << " accepted steps of " << steps_ << " (" << exempt_ << " zero-gradient zero steps), "
     << violations_ << " violations; worst ||r||/bound " << fmt_num(worst_norm_ratio_)
     << ", worst -r^T s/bound " << fmt_num(worst_dir_ratio_);
  if (!first_violation_.empty()) os << "; first violation " << first_violation_;
  res.details = os.str();
  return res;
}

CheckResult check_accounting(const RunResult& result, std::size_t n) {
  const RunSummary& s = result.summary;
  const std::uint64_t paper = n * s.epochs_started + s.b * s.sarah_steps;
  const std::uint64_t raw = n * s.epochs_started + 2 * s.b * s.sarah_steps;
  CheckResult res;
  res.name = "oracle accounting";
  bool ok = s.totals.grad_paper == paper && s.totals.grad_raw == raw;
  if (s.method == "subsampled_crn") {
    // One fresh batch per step: paper and raw coincide.
    const std::uint64_t fresh = s.b * s.iterations;
    ok = s.totals.grad_paper == fresh && s.totals.grad_raw == fresh && s.totals.hess_paper == fresh &&
         s.totals.hess_raw == fresh;
  } else if (s.method == "sarah_gd") {
    ok = ok && s.totals.hess_paper == 0 && s.totals.hess_raw == 0;
  } else {
    ok = ok && s.totals.hess_paper == paper && s.totals.hess_raw == raw;
  }
  res.passed = ok;
  res.measured = {static_cast<double>(s.totals.grad_paper), static_cast<double>(s.totals.grad_raw),
                  static_cast<double>(s.totals.hess_paper), static_cast<double>(s.totals.hess_raw)};
  res.bound = {static_cast<double>(paper), static_cast<double>(raw), static_cast<double>(paper),
               static_cast<double>(raw)};
  res.details = s.method + ": epochs " + std::to_string(s.epochs_started) + ", recursive steps " +
                std::to_string(s.sarah_steps) + ", b " + std::to_string(s.b);
  return res;
}

std::vector<CheckResult> run_verification_suite(const SuiteOptions& opt) {
  const std::uint64_t seed = opt.seed;
  const ProblemPtr logistic = make_logistic_l2(make_classification_dataset(64, 5, 0.1, derive_seed(seed, 40)), 0.1);
  const ProblemPtr well = make_double_well(32, 6, 0.3, derive_seed(seed, 41));

  std::vector<std::function<CheckResult()>> jobs;
  jobs.push_back([&] { return check_identity_suite(opt.identity_instances, derive_seed(seed, 1)); });
  jobs.push_back([&] {
    const std::vector<double> thetas{0.25, 0.1, 0.01};
    return check_model_upper(opt.upper_instances, thetas, derive_seed(seed, 2));
  });
  jobs.push_back([&] { return check_oracle_equivalence(opt.equivalence_instances, 1e-4, derive_seed(seed, 3)); });
  jobs.push_back([&] {
    const std::vector<double> cs{0.1, 0.3, 0.5};
    return check_ema_weight_bound(cs, opt.ema_t_max);
  });
  jobs.push_back([&] { return check_variance_scalings(*logistic, VarianceOptions{}, derive_seed(seed, 4)); });
  jobs.push_back([&] { return check_martingale_unbiasedness(*logistic, 10000, derive_seed(seed, 5)); });
  jobs.push_back([&] { return check_hutchinson_unbiasedness(*logistic, 10000, derive_seed(seed, 6)); });
  jobs.push_back([&] {
    ResolveOptions ro;
    ro.estimate.seed = derive_seed(seed, 7);
    const ProblemConstants k = resolve_constants(*well, ro).values;
    return check_one_step_bound(*well, k, Vector(6, 2.0), 50);
  });

  auto audit = std::make_shared<InexactnessAudit>();
  if (opt.run_sosp) {
    jobs.push_back([&, audit] {
      std::vector<SospCase> cases;
      auto add_case = [&](std::string name, ProblemPtr p) {
        ResolveOptions ro;
        ro.estimate.seed = derive_seed(seed, 8);
        SospCase c;
        c.name = std::move(name);
        c.constants = resolve_constants(*p, ro).values;
        c.problem = std::move(p);
        c.config.epsilon = 1e-2;
        cases.push_back(std::move(c));
      };
      add_case("double_well", make_double_well(64, 10, 0.3, derive_seed(seed, 42)));
      add_case("nonconvex_logistic",
               make_nonconvex_logistic(make_classification_dataset(200, 20, 0.1, derive_seed(seed, 43)), 0.1));
      return check_sosp_at_termination(cases, opt.sosp_runs, derive_seed(seed, 9), audit->observer()).result;
    });
  }

  std::vector<CheckResult> results(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    try {
      results[i] = jobs[i]();
    } catch (const std::exception& e) {
      results[i].name = "check " + std::to_string(i);
      results[i].passed = false;
      results[i].details = std::string("error: ") + e.what();
    }
  });
  if (opt.run_sosp) results.push_back(audit->result("inexactness of accepted steps"));
  return results;
}

std::string results_json(std::span<const CheckResult> results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const CheckResult& r : results) {
    nlohmann::json j;
    j["name"] = r.name;
    j["passed"] = r.passed;
    j["measured"] = r.measured;
    j["bound"] = r.bound;
    j["details"] = r.details;
    j["seconds"] = r.seconds;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

std::string results_table(std::span<const CheckResult> results) {
  std::size_t width = 5;
  for (const CheckResult& r : results) width = std::max(width, r.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "check" << "  result  seconds  details\n";
  for (const CheckResult& r : results) {
    os << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << (r.passed ? "PASS  " : "FAIL  ") << "  "
       << std::right << std::setw(7) << std::fixed << std::setprecision(2) << r.seconds << "  " << r.details << "\n";
    os.unsetf(std::ios::fixed);
  }
  return os.str();
}

}  // namespace vrcn
