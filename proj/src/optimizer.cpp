#include "vrcn/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "vrcn/errors.hpp"
#include "vrcn/krylov.hpp"
#include "vrcn/rng.hpp"

namespace vrcn {

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::NonconvexPlain:
      return "nonconvex";
    case Regime::Convex:
      return "convex";
    case Regime::NonconvexProx:
      return "nonconvex_prox";
  }
  return "unknown";
}

std::string to_string(Baseline baseline) {
  switch (baseline) {
    case Baseline::FullCRN:
      return "full_crn";
    case Baseline::SubsampledCRN:
      return "subsampled_crn";
    case Baseline::SarahGD:
      return "sarah_gd";
  }
  return "unknown";
}

Regime parse_regime(const std::string& name) {
  if (name == "nonconvex") return Regime::NonconvexPlain;
  if (name == "convex") return Regime::Convex;
  if (name == "nonconvex_prox") return Regime::NonconvexProx;
  throw ConfigError("unknown regime '" + name + "' (expected nonconvex, convex, nonconvex_prox)");
}

Baseline parse_baseline(const std::string& name) {
  if (name == "full_crn") return Baseline::FullCRN;
  if (name == "subsampled_crn") return Baseline::SubsampledCRN;
  if (name == "sarah_gd") return Baseline::SarahGD;
  throw ConfigError("unknown baseline '" + name + "' (expected full_crn, subsampled_crn, sarah_gd)");
}

std::string to_string(Termination termination) {
  return termination == Termination::StepNorm ? "step_norm" : "budget";
}

void RunConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be > 0");
  };
  positive(epsilon, "epsilon");
  if (!fixed_alpha) {
    if (!(c > 0.0 && c <= 0.5)) throw ConfigError("c must lie in (0, 1/2]");
  } else if (!(*fixed_alpha > 0.0 && *fixed_alpha <= 1.0)) {
    throw ConfigError("fixed_alpha must lie in (0, 1]");
  }
  if (!(theta > 0.0 && theta <= 0.25)) throw ConfigError("theta must lie in (0, 1/4]");
  if (M) positive(*M, "M");
  if (b && *b == 0) throw ConfigError("b must be >= 1");
  if (beta0) positive(*beta0, "beta0");
  positive(constants.C_T, "C_T");
  positive(constants.C_max, "C_max");
  positive(constants.C1, "C1");
  positive(constants.C_beta, "C_beta");
  positive(constants.C3, "C3");
  positive(constants.C4, "C4");
  positive(constants.C5, "C5");
  positive(prox_epoch_exponent, "prox_epoch_exponent");
  if (epochs && *epochs == 0) throw ConfigError("epochs must be >= 1");
  if (inner && *inner == 0) throw ConfigError("inner must be >= 1");
  if (max_total_iters == 0) throw ConfigError("max_total_iters must be >= 1");
  if (hutchinson.q == 0) throw ConfigError("hutchinson q must be >= 1");
  if (max_consecutive_floors == 0) throw ConfigError("max_consecutive_floors must be >= 1");
}

double ceil_tolerant(double x) {
  return std::ceil(x - 1e-9 * std::max(1.0, std::abs(x)));
}

double Schedule::beta(std::size_t t) const {
  switch (beta_kind) {
    case BetaKind::Zero:
      return 0.0;
    case BetaKind::Constant:
      return beta_value;
    case BetaKind::Linear:
      return beta_value * static_cast<double>(t + 1);
  }
  return 0.0;
}

namespace {

std::size_t to_count(double x) {
  if (!std::isfinite(x) || x > 1e15) throw ConfigError("schedule produced a non-representable count");
  return static_cast<std::size_t>(std::max(1.0, ceil_tolerant(x)));
}

double convex_base_damping(std::size_t b, const RunConfig& config, const ProblemConstants& k) {
  const double b0 = 2.0 * std::max(config.constants.C4 * k.sigma2 / std::sqrt(static_cast<double>(b)),
                                   config.constants.C5 * k.L2 * *k.R);
  if (config.beta0) {
    if (*config.beta0 < b0) {
      throw ConfigError("beta0 may only raise the computed base damping " + std::to_string(b0));
    }
    return *config.beta0;
  }
  return b0;
}

}  // namespace

Schedule schedule(Regime regime, std::size_t n, std::size_t b, const RunConfig& config,
                  const ProblemConstants& k) {
  const ScheduleConstants& c = config.constants;
  const double nd = static_cast<double>(n);
  const double eps15 = std::pow(config.epsilon, 1.5);
  Schedule s;
  switch (regime) {
    case Regime::NonconvexPlain: {
      const double nt = std::cbrt(nd);
      s.inner = to_count(c.C_max * nt);
      s.epochs = to_count(c.C_T * std::sqrt(k.L2) / (c.C_max * nt * eps15));
      s.beta_kind = BetaKind::Zero;
      break;
    }
    case Regime::Convex: {
      if (!k.R) {
        throw ConfigError("the convex regime needs a distance estimate R >= ||x0 - x*||; set [problem] R");
      }
      const double r = *k.R;
      const double beta0 = convex_base_damping(b, config, k);
      const double first = r * std::sqrt((c.C1 * k.L2 * r + c.C_beta * beta0) / config.epsilon);
      const double second = c.C3 * c.C3 * k.sigma1 * k.sigma1 * r * r / (config.epsilon * config.epsilon);
      s.epochs = 1;
      s.inner = to_count(std::max(first, second));
      s.beta_kind = BetaKind::Linear;
      s.beta_value = beta0;
      break;
    }
    case Regime::NonconvexProx: {
      if (!(config.beta > 0.0)) throw ConfigError("the prox regime needs beta > 0");
      const double ne = std::pow(nd, config.prox_epoch_exponent);
      s.inner = to_count(c.C_max * ne);
      s.epochs = to_count(c.C_T * std::sqrt(k.L2) / (c.C_max * ne * eps15));
      s.beta_kind = BetaKind::Constant;
      s.beta_value = config.beta;
      break;
    }
  }
  if (config.epochs) s.epochs = *config.epochs;
  if (config.inner) s.inner = *config.inner;
  return s;
}

AbsorptionReport absorption_monitor(Regime regime, std::size_t b, std::size_t T, double threshold) {
  AbsorptionReport rep;
  rep.threshold = threshold;
  const double bd = static_cast<double>(b), td = static_cast<double>(T);
  switch (regime) {
    case Regime::NonconvexPlain:
      rep.ratio = std::pow(bd, 0.75) / std::pow(td, 1.125);
      rep.flagged = rep.ratio < threshold;
      rep.formula = "b^(3/4) / T^(9/8)";
      break;
    case Regime::NonconvexProx:
      rep.ratio = std::pow(td, 2.5) / (bd * bd * bd);
      rep.flagged = rep.ratio > threshold;
      rep.formula = "T^(5/2) / b^3";
      break;
    case Regime::Convex:
      rep.ratio = 0.0;
      rep.flagged = false;
      rep.formula = "n/a";
      break;
  }
  return rep;
}

double hessian_lambda_min(const FiniteSumProblem& problem, std::span<const double> x) {
  if (problem.d() <= 400) return symmetric_eigenvalues(problem.full_hess_dense(x))[0];
  return lanczos_lambda_min(problem.full_hess(x), 3, std::min<std::size_t>(problem.d(), 300), 0x1a2b);
}

namespace {

using Clock = std::chrono::steady_clock;

// State and bookkeeping shared by the main method and the baselines.
class Engine {
 public:
  Engine(const FiniteSumProblem& problem, const RunConfig& config, const ProblemConstants& constants,
         std::string method)
      : p_(problem),
        cfg_(config),
        n_(problem.n()),
        d_(problem.d()),
        rng_batch_(derive_seed(config.seed, 1)),
        rng_probe_(derive_seed(config.seed, 2)),
        start_(Clock::now()) {
    cfg_.validate();
    auto& s = result_.summary;
    s.method = std::move(method);
    s.constants = constants;
    b_ = cfg_.b.value_or(static_cast<std::size_t>(ceil_tolerant(std::sqrt(static_cast<double>(n_)))));
    if (cfg_.sampling == Sampling::WithoutReplacement && b_ > n_) {
      throw ConfigError("b exceeds n under sampling without replacement");
    }
    s.b = b_;
    mode_ = b_ == n_ ? Sampling::FullPass : cfg_.sampling;
    M_ = cfg_.M.value_or(2.0 * constants.L2);
    if (!(M_ > 0.0)) throw ConfigError("M must be > 0; with L2 = 0 set M explicitly");
    s.M = M_;
    const double l2_stop = constants.L2 > 0.0 ? constants.L2 : 0.5 * M_;
    s.stop_threshold = std::sqrt(cfg_.epsilon / l2_stop);
    x_ = cfg_.x0.value_or(Vector(d_));
    require_same_dim(d_, x_.size(), "initial point");
    require_finite(x_, "initial point");
    solver_ = cfg_.solver;
    solver_.theta = cfg_.theta;
    ctx_.backend = cfg_.backend;
    ctx_.hutchinson = cfg_.hutchinson;
    ctx_.rng = &rng_probe_;
    ctx_.counter = &counter_;
  }

  std::vector<std::size_t> draw_batch() { return sample_batch(n_, b_, mode_, rng_batch_); }

  // Solves the model and applies the step if accepted. Returns true when the
  // stopping rule fired.
  bool step(const CubicModel& model, std::size_t epoch, std::size_t t, double alpha) {
    const SubproblemSolution sol = solve(model, solver_);
    const bool accepted = sol.status != SolveStatus::ToleranceFloor;
    if (cfg_.observer) cfg_.observer(StepAudit{epoch, t, &model, &sol, accepted, cfg_.theta});
    if (accepted) {
      const bool zero_step = sol.status == SolveStatus::GradientZero && norm(sol.s) == 0.0;
      if (!zero_step) {
        const InexactnessReport rep = check_inexactness(model, sol.s, cfg_.theta);
        if (!rep.ok()) {
          std::ostringstream msg;
          msg << "subproblem step violates the inexactness conditions at epoch " << epoch << ", t " << t
              << ": ||r|| = " << rep.residual_norm << " (bound " << rep.norm_bound << "), r^T s = "
              << rep.r_dot_s << " (bound " << rep.dir_bound << ")";
          throw OptimizerError(msg.str());
        }
      }
      consecutive_floors_ = 0;
    } else {
      ++result_.summary.rejected_steps;
      if (++consecutive_floors_ >= cfg_.max_consecutive_floors) {
        std::ostringstream msg;
        msg << "subproblem solver hit its tolerance floor " << consecutive_floors_
            << " times in a row at epoch " << epoch << ", t " << t << ": ||g|| = " << norm(model.g)
            << ", beta = " << model.beta << ", M = " << model.M << ", lambda_min estimate = "
            << sol.lambda_min_estimate << ", bracket [" << sol.lambda_lo << ", " << sol.lambda_hi
            << "], escalations = " << sol.escalations << ", anomaly = " << sol.anomaly;
        throw OptimizerError(msg.str());
      }
      spdlog::warn("{}: step rejected at epoch {}, t {} (solver tolerance floor)", result_.summary.method,
                   epoch, t);
    }
    const double sn = accepted ? norm(sol.s) : 0.0;
    result_.summary.x_prev = x_;
    if (accepted) x_ += sol.s;
    IterRecord rec;
    rec.epoch = epoch;
    rec.t = t;
    rec.step_norm = sn;
    rec.lambda = sol.lambda;
    rec.beta_t = model.beta;
    rec.alpha_t = alpha;
    rec.cg_iters = sol.cg_total_iters;
    rec.status = sol.status;
    rec.accepted = accepted;
    rec.model_value = accepted ? sol.model_value : 0.0;
    push(rec);
    result_.summary.last_step_norm = sn;
    return accepted && cfg_.step_norm_stop && sn <= result_.summary.stop_threshold;
  }

  // Records a row after diagnostics; the counter snapshot is taken last.
  void push(IterRecord& rec) {
    if (cfg_.log_F) {
      rec.F = p_.full_value(x_);
      counter_.diagnostic_value += n_;
    }
    if (cfg_.log_grad_norm) {
      rec.grad_norm = norm(p_.full_grad(x_));
      counter_.diagnostic_grad += n_;
    }
    if (cfg_.record_wall_clock) {
      rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
    }
    rec.counter = counter_;
    result_.trace.push_back(std::move(rec));
    ++result_.summary.iterations;
  }

  bool budget_left() const { return result_.summary.iterations < cfg_.max_total_iters; }

  RunResult finish(Termination how) {
    auto& s = result_.summary;
    s.terminated_by = how;
    if (s.iterations == 0) s.x_prev = x_;
    s.x = x_;
    s.final_value = p_.full_value(x_);
    s.final_grad_norm = norm(p_.full_grad(x_));
    s.final_lambda_min = hessian_lambda_min(p_, x_);
    counter_.diagnostic_value += n_;
    counter_.diagnostic_grad += n_;
    counter_.diagnostic_hess += n_;
    s.totals = counter_;
    return std::move(result_);
  }

  const FiniteSumProblem& p_;
  RunConfig cfg_;
  std::size_t n_;
  std::size_t d_;
  std::size_t b_ = 1;
  Sampling mode_ = Sampling::WithReplacement;
  double M_ = 0.0;
  Vector x_;
  SolverConfig solver_;
  std::mt19937_64 rng_batch_;
  std::mt19937_64 rng_probe_;
  OracleCounter counter_;
  EstimatorContext ctx_;
  std::size_t consecutive_floors_ = 0;
  Clock::time_point start_;
  RunResult result_;
};

// The main loop. Epoch k: snapshot at x_0; step t = 0 uses the snapshot
// estimates, each later step first moves the estimators from x_{t-1} to x_t.
RunResult run_recursive(Engine& e, const Schedule& sch, const EmaSchedule& ema) {
  e.result_.summary.schedule = sch;
  for (std::size_t epoch = 0; epoch < sch.epochs; ++epoch) {
    if (!e.budget_left()) break;
    e.result_.summary.restart_points.push_back(e.x_);
    ++e.result_.summary.epochs_started;
    EstimatorStates states = snapshot(e.p_, e.x_, e.ctx_);
    Vector est_point = e.x_;
    for (std::size_t t = 0; t < sch.inner; ++t) {
      if (!e.budget_left()) break;
      double alpha = 0.0;
      if (t >= 1) {
        const std::vector<std::size_t> batch = e.draw_batch();
        alpha = ema.alpha(t);
        sarah_step(states, e.p_, est_point, e.x_, batch, ema, t, e.ctx_);
        est_point = e.x_;
        ++e.result_.summary.sarah_steps;
      }
      const CubicModel model{states.grad.g_ema, repr_operator(states.hess.h_ema), sch.beta(t), e.M_};
      if (e.step(model, epoch, t, alpha)) return e.finish(Termination::StepNorm);
    }
  }
  return e.finish(Termination::Budget);
}

RunResult run_subsampled(Engine& e, std::size_t steps) {
  Schedule sch;
  sch.epochs = 1;
  sch.inner = steps;
  e.result_.summary.schedule = sch;
  const std::size_t d = e.d_;
  for (std::size_t t = 0; t < steps; ++t) {
    if (!e.budget_left()) break;
    const std::vector<std::size_t> batch = e.draw_batch();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    Vector g(d), gi(d);
    for (std::size_t i : batch) {
      e.p_.component_grad_into(i, e.x_, gi.span());
      g += gi;
    }
    g *= inv_b;
    HessianRepr h;
    if (e.cfg_.backend == HessianBackend::Dense) {
      Matrix acc(d, d);
      for (std::size_t i : batch) e.p_.component_hessian_accumulate(i, e.x_, 1.0, acc);
      acc *= inv_b;
      h = std::move(acc);
    } else {
      ProbeSketch acc(d, e.cfg_.hutchinson.cap);
      for (std::size_t i : batch) {
        acc = ProbeSketch::combine(acc, 1.0,
                                   sketch_component(e.p_, i, e.x_, e.cfg_.hutchinson.q, e.cfg_.hutchinson.dist,
                                                    e.rng_probe_, e.cfg_.hutchinson.cap),
                                   inv_b);
      }
      e.counter_.hvp_raw += batch.size() * e.cfg_.hutchinson.q;
      h = std::move(acc);
    }
    const std::uint64_t b = batch.size();
    e.counter_.grad_raw += b;
    e.counter_.hess_raw += b;
    e.counter_.grad_paper += b;
    e.counter_.hess_paper += b;
    const CubicModel model{std::move(g), repr_operator(h), 0.0, e.M_};
    if (e.step(model, 0, t, 1.0)) return e.finish(Termination::StepNorm);
  }
  return e.finish(Termination::Budget);
}

// First-order recursive gradient with step 1 / L_H. Stops when the step
// (equivalently the estimate) is small: ||v_t|| <= eps.
RunResult run_sarah_gd(Engine& e, const ProblemConstants& k) {
  if (!(k.LH > 0.0)) throw ConfigError("sarah_gd needs LH > 0");
  const double step = 1.0 / k.LH;
  auto& s = e.result_.summary;
  s.stop_threshold = e.cfg_.epsilon * step;
  Schedule sch;
  sch.inner = e.cfg_.inner.value_or(std::max<std::size_t>(1, (e.n_ + e.b_ - 1) / e.b_));
  sch.epochs = e.cfg_.epochs.value_or((e.cfg_.max_total_iters + sch.inner - 1) / sch.inner);
  s.schedule = sch;
  const std::size_t d = e.d_;
  for (std::size_t epoch = 0; epoch < sch.epochs; ++epoch) {
    if (!e.budget_left()) break;
    s.restart_points.push_back(e.x_);
    ++s.epochs_started;
    Vector v = e.p_.full_grad(e.x_);
    e.counter_.grad_raw += e.n_;
    e.counter_.grad_paper += e.n_;
    Vector prev = e.x_;
    for (std::size_t t = 0; t < sch.inner; ++t) {
      if (!e.budget_left()) break;
      if (t >= 1) {
        const std::vector<std::size_t> batch = e.draw_batch();
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        Vector delta(d), gc(d), gp(d);
        for (std::size_t i : batch) {
          e.p_.component_grad_into(i, e.x_, gc.span());
          e.p_.component_grad_into(i, prev, gp.span());
          gc -= gp;
          delta += gc;
        }
        axpy_inplace(inv_b, delta, v.span());
        e.counter_.grad_raw += 2 * batch.size();
        e.counter_.grad_paper += batch.size();
        ++s.sarah_steps;
        prev = e.x_;
      }
      const double sn = step * norm(v);
      s.x_prev = e.x_;
      axpy_inplace(-step, v, e.x_.span());
      IterRecord rec;
      rec.epoch = epoch;
      rec.t = t;
      rec.step_norm = sn;
      rec.alpha_t = 1.0;
      e.push(rec);
      s.last_step_norm = sn;
      if (e.cfg_.step_norm_stop && sn <= s.stop_threshold) return e.finish(Termination::StepNorm);
    }
  }
  return e.finish(Termination::Budget);
}

}  // namespace

RunResult run(const FiniteSumProblem& problem, Regime regime, const RunConfig& config,
              const ProblemConstants& constants) {
  Engine e(problem, config, constants, "vrcn_" + to_string(regime));
  const Schedule sch = schedule(regime, e.n_, e.b_, e.cfg_, constants);
  EmaSchedule ema{config.c, config.fixed_alpha};
  ema.validate();
  if (regime != Regime::Convex) {
    const AbsorptionReport abs = absorption_monitor(regime, e.b_, sch.inner);
    if (abs.flagged) {
      spdlog::info("absorption ratio {} = {:.4g} is outside the analysed regime (threshold {})", abs.formula,
                   abs.ratio, abs.threshold);
    }
  }
  if (regime == Regime::NonconvexProx) {
    spdlog::debug("prox regime epoch exponent {}", config.prox_epoch_exponent);
  }
  return run_recursive(e, sch, ema);
}

RunResult run_baseline(const FiniteSumProblem& problem, Baseline method, const RunConfig& config,
                       const ProblemConstants& constants) {
  switch (method) {
    case Baseline::FullCRN: {
      RunConfig cfg = config;
      cfg.b = problem.n();
      cfg.fixed_alpha = 1.0;
      Engine e(problem, cfg, constants, to_string(method));
      Schedule sch;
      sch.epochs = 1;
      sch.inner = cfg.inner.value_or(cfg.max_total_iters);
      return run_recursive(e, sch, EmaSchedule{cfg.c, 1.0});
    }
    case Baseline::SubsampledCRN: {
      Engine e(problem, config, constants, to_string(method));
      return run_subsampled(e, config.inner.value_or(config.max_total_iters));
    }
    case Baseline::SarahGD: {
      Engine e(problem, config, constants, to_string(method));
      return run_sarah_gd(e, constants);
    }
  }
  throw ConfigError("unknown baseline");
}

}  // namespace vrcn
