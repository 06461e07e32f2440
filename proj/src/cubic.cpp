#include "vrcn/cubic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "vrcn/errors.hpp"
#include "vrcn/kernels.hpp"
#include "vrcn/krylov.hpp"

namespace vrcn {

void CubicModel::validate() const {
  if (!(M > 0.0) || !std::isfinite(M)) throw std::invalid_argument("cubic model: M must be > 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("cubic model: beta must be >= 0");
  }
  require_same_dim(H.dim(), g.size(), "cubic model");
  require_finite(g, "cubic model gradient");
}

namespace {

// (H + beta I) s
Vector apply_shifted(const CubicModel& m, std::span<const double> s) {
  Vector out = m.H.apply(s);
  if (m.beta != 0.0) axpy_inplace(m.beta, s, out.span());
  return out;
}

}  // namespace

double model_value(const CubicModel& model, std::span<const double> s) {
  require_same_dim(model.dim(), s.size(), "model_value");
  const double ns = norm(s);
  const Vector hs = apply_shifted(model, s);
  return dot(model.g, s) + 0.5 * dot(s, hs) + model.M / 6.0 * ns * ns * ns;
}

Vector model_grad(const CubicModel& model, std::span<const double> s) {
  require_same_dim(model.dim(), s.size(), "model_grad");
  Vector r = apply_shifted(model, s);
  r += model.g;
  axpy_inplace(0.5 * model.M * norm(s), s, r.span());
  return r;
}

double model_value_from_residual(const CubicModel& model, std::span<const double> s) {
  const Vector r = model_grad(model, s);
  const Vector hs = apply_shifted(model, s);
  const double ns = norm(s);
  return dot(r, s) - 0.5 * dot(s, hs) - model.M / 3.0 * ns * ns * ns;
}

double identity_check(const CubicModel& model, std::span<const double> s) {
  return std::abs(model_value(model, s) - model_value_from_residual(model, s));
}

InexactnessReport check_inexactness(const CubicModel& model, std::span<const double> s,
                                    double theta, double g_floor) {
  InexactnessReport rep;
  rep.theta_used = theta;
  const double ns = norm(s);
  if (ns == 0.0) {
    rep.residual_norm = norm(model.g);
    rep.norm_bound = g_floor;
    rep.norm_ok = rep.residual_norm <= g_floor;
    rep.dir_ok = true;
    return rep;
  }
  const Vector r = model_grad(model, s);
  rep.residual_norm = norm(r);
  rep.norm_bound = theta * 0.5 * model.M * ns * ns;
  rep.r_dot_s = dot(r, s);
  rep.dir_bound = -theta * model.M / 6.0 * ns * ns * ns;
  rep.norm_ok = rep.residual_norm <= rep.norm_bound;
  rep.dir_ok = rep.r_dot_s >= rep.dir_bound;
  return rep;
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged:
      return "converged";
    case SolveStatus::GradientZero:
      return "gradient_zero";
    case SolveStatus::BracketExpanded:
      return "bracket_expanded";
    case SolveStatus::ToleranceFloor:
      return "tolerance_floor";
  }
  return "unknown";
}

namespace {

// Flips v so that its first entry that is not negligible is positive.
void orient(Vector& v) {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  for (double x : v) {
    if (std::abs(x) > 1e-8 * scale) {
      if (x < 0.0) v *= -1.0;
      return;
    }
  }
}

struct Evaluation {
  double lambda = 0.0;
  Vector s;
  bool breakdown = false;
  double phi = 0.0;
  double psi = 0.0;
  InexactnessReport report;
};

class SecularSolver {
 public:
  SecularSolver(const CubicModel& model, const SolverConfig& cfg)
      : m_(model), cfg_(cfg), d_(model.dim()) {
    max_cg_ = cfg.max_cg != 0 ? cfg.max_cg : 5 * d_ + 100;
    gnorm_ = norm(model.g);
  }

  SubproblemSolution run() {
    SubproblemSolution sol;
    const SymmetricOperator hp = m_.H.shifted(m_.beta);
    const EigenPair bottom = lanczos_bottom(hp, std::min(d_, cfg_.lanczos_iters), cfg_.seed);
    sol.lambda_min_estimate = bottom.value;

    double g_floor = cfg_.g_floor;
    if (g_floor < 0.0) {
      g_floor = 0.0;
      if (gnorm_ < 1e-3) {
        const double hnorm = lanczos_operator_norm(hp, std::min(d_, cfg_.lanczos_iters), cfg_.seed);
        g_floor = 1e-13 * (1.0 + hnorm);
      }
    }
    g_floor_ = g_floor;
    if (gnorm_ <= g_floor) return gradient_zero(bottom, sol);

    bottom_ = &bottom;
    floor_ = std::max(0.0, -bottom.value);
    lambda_bar_ = std::sqrt(gnorm_ * m_.M);

    std::optional<Evaluation> accepted;
    for (std::size_t esc = 0; esc <= cfg_.max_escalations; ++esc) {
      sol.escalations = esc;
      const double tol = cfg_.c_theta * cfg_.theta * std::pow(0.1, static_cast<double>(esc));
      accepted = search(tol);
      if (accepted) break;
    }
    // Tiny gradients need a residual far below any relative escalation level.
    if (!accepted && cfg_.refine_cg_tol < cfg_.c_theta * cfg_.theta * std::pow(0.1, static_cast<double>(cfg_.max_escalations))) {
      accepted = search(cfg_.refine_cg_tol);
    }

    if (!accepted) {
      sol.status = SolveStatus::ToleranceFloor;
      if (best_) {
        finish(sol, *best_);
      } else {
        finish(sol, Evaluation{0.0, Vector(d_), false, 0.0, 0.0, {}});
      }
      return sol;
    }
    Evaluation chosen = std::move(*accepted);
    if (cfg_.refine && !hard_case_) {
      if (auto sharper = refine(chosen)) chosen = std::move(*sharper);
    }
    sol.status = expanded_ ? SolveStatus::BracketExpanded : SolveStatus::Converged;
    sol.hard_case = hard_case_;
    finish(sol, chosen);
    return sol;
  }

 private:
  Evaluation evaluate(double lambda, double tol) {
    Evaluation e;
    e.lambda = lambda;
    const Vector rhs = -1.0 * m_.g;
    CgResult res = cg_solve(m_.H, rhs, CgOptions{m_.beta + lambda, tol, max_cg_, cfg_.jacobi});
    cg_total_ += res.report.iterations;
    if (res.report.breakdown) {
      e.breakdown = true;
      return e;
    }
    e.s = std::move(res.x);
    e.phi = norm(e.s);
    e.psi = 2.0 * lambda / m_.M - e.phi;
    e.report = check_inexactness(m_, e.s, cfg_.theta, g_floor_);
    track_best(e);
    return e;
  }

  bool acceptable(const Evaluation& e) const {
    return !e.breakdown && e.report.ok() && e.lambda >= floor_ && model_value(m_, e.s) <= 0.0;
  }

  void track_best(const Evaluation& e) {
    if (e.phi == 0.0) return;
    const double need = e.report.residual_norm / (0.5 * m_.M * e.phi * e.phi);
    if (!best_ || need < best_need_) {
      best_ = e;
      best_need_ = need;
    }
  }

  // h(lambda) = 1/phi - M/(2 lambda) has the sign of psi and is close to linear.
  double secant_value(const Evaluation& e) const { return 1.0 / e.phi - m_.M / (2.0 * e.lambda); }

  std::optional<Evaluation> search(double tol) {
    double lo = floor_;
    std::optional<Evaluation> lo_eval;
    std::optional<Evaluation> hi_eval;

    if (floor_ > 0.0) {
      // Probe just above the floor: a non-negative psi there is the hard case.
      double step = 1e-8 * floor_;
      double probe = floor_ + step;
      Evaluation e;
      for (int k = 0; k < 200; ++k) {
        e = evaluate(probe, tol);
        if (!e.breakdown) break;
        floor_ = probe;
        step *= 2.0;
        probe = floor_ + step;
      }
      if (e.breakdown) return std::nullopt;
      if (e.psi >= 0.0) {
        Evaluation done = complete_hard_case(e);
        track_best(done);
        if (acceptable(done)) {
          hard_case_ = true;
          record_bracket(floor_, e.lambda, std::nullopt, e);
          return done;
        }
        hi_eval = e;
      } else {
        if (acceptable(e)) return e;
        lo = e.lambda;
        lo_eval = e;
      }
    } else if (bottom_->value > 0.0) {
      Evaluation e = evaluate(0.0, tol);
      if (!e.breakdown) {
        lo_eval = e;
      } else {
        floor_ = 0.0;
      }
    }

    double hi = hi_eval ? hi_eval->lambda : std::max(lambda_bar_, 2.0 * lo);
    if (!hi_eval) {
      for (int k = 0; k < 2000; ++k) {
        Evaluation e = evaluate(hi, tol);
        if (!e.breakdown && acceptable(e)) return finish_search(e, lo, hi, lo_eval, e);
        if (!e.breakdown && e.psi >= 0.0) {
          hi_eval = e;
          break;
        }
        if (e.breakdown) {
          floor_ = hi;
          lo_eval.reset();
        } else {
          lo_eval = e;
        }
        lo = hi;
        hi *= 2.0;
        expanded_ = true;
        if (!std::isfinite(hi)) return std::nullopt;
      }
      if (!hi_eval) return std::nullopt;
    }

    const double width_tol = std::max(1e-12, 1e-8 * lambda_bar_);
    int same_side = 0;  // >0: hi kept moving, <0: lo kept moving
    double f_lo = lo_eval && lo_eval->lambda > 0.0 ? secant_value(*lo_eval) : 0.0;
    double f_hi = secant_value(*hi_eval);
    for (std::size_t it = 0; it < cfg_.max_bisect && hi - lo > width_tol; ++it) {
      const double w = hi - lo;
      double cand = 0.5 * (lo + hi);
      if (lo_eval && lo_eval->lambda > 0.0 && f_hi != f_lo) {
        const double sec = lo - f_lo * w / (f_hi - f_lo);
        if (sec > lo + 1e-3 * w && sec < hi - 1e-3 * w) cand = sec;
      }
      ++bisect_;
      Evaluation e = evaluate(cand, tol);
      if (e.breakdown) {
        floor_ = cand;
        lo = cand;
        lo_eval.reset();
        same_side = 0;
        continue;
      }
      if (acceptable(e)) return finish_search(e, lo, hi, lo_eval, *hi_eval);
      if (e.psi < 0.0) {
        lo = cand;
        lo_eval = e;
        f_lo = secant_value(e);
        same_side = same_side < 0 ? same_side - 1 : -1;
        if (same_side <= -2) f_hi *= 0.5;
      } else {
        hi = cand;
        hi_eval = e;
        f_hi = secant_value(e);
        same_side = same_side > 0 ? same_side + 1 : 1;
        if (same_side >= 2) f_lo *= 0.5;
      }
    }
    record_bracket(lo, hi, lo_eval, *hi_eval);
    return std::nullopt;
  }

  Evaluation finish_search(const Evaluation& e, double lo, double hi,
                           const std::optional<Evaluation>& lo_eval, const Evaluation& hi_eval) {
    // Narrow the bracket with the accepted point so refinement starts from it.
    std::optional<Evaluation> new_lo = lo_eval;
    Evaluation new_hi = hi_eval;
    if (e.psi < 0.0) {
      lo = e.lambda;
      new_lo = e;
    } else {
      hi = e.lambda;
      new_hi = e;
    }
    record_bracket(lo, hi, new_lo, new_hi);
    return e;
  }

  void record_bracket(double lo, double hi, const std::optional<Evaluation>& lo_eval,
                      const Evaluation& hi_eval) {
    bracket_lo_ = lo;
    bracket_hi_ = hi;
    psi_lo_ = lo_eval ? lo_eval->psi : std::numeric_limits<double>::quiet_NaN();
    psi_hi_ = hi_eval.psi;
  }

  Evaluation complete_hard_case(const Evaluation& e) {
    Vector v = bottom_->vector;
    orient(v);
    const double target = 2.0 * e.lambda / m_.M;
    const double b = dot(e.s, v);
    const double c = norm_squared(e.s) - target * target;
    const double disc = std::max(0.0, b * b - c);
    const double t1 = -b + std::sqrt(disc);
    const double t2 = -b - std::sqrt(disc);
    Vector s1 = axpy(t1, v, e.s);
    Vector s2 = axpy(t2, v, e.s);
    const double m1 = model_value(m_, s1);
    const double m2 = model_value(m_, s2);
    Evaluation out;
    out.lambda = e.lambda;
    const bool tie = std::abs(m1 - m2) <= 1e-12 * (std::abs(m1) + std::abs(m2));
    out.s = (tie || m1 <= m2) ? std::move(s1) : std::move(s2);
    out.phi = norm(out.s);
    out.psi = 2.0 * out.lambda / m_.M - out.phi;
    out.report = check_inexactness(m_, out.s, cfg_.theta, g_floor_);
    return out;
  }

  // Tight-tolerance secant iterations on the final bracket.
  std::optional<Evaluation> refine(const Evaluation& start) {
    const double tol = cfg_.refine_cg_tol;
    Evaluation cur = evaluate(start.lambda, tol);
    if (cur.breakdown) return std::nullopt;
    double lo = bracket_lo_;
    double hi = bracket_hi_;
    std::optional<Evaluation> lo_eval;
    std::optional<Evaluation> hi_eval;
    if (cur.psi < 0.0) {
      lo = cur.lambda;
      lo_eval = cur;
    } else {
      hi = cur.lambda;
      hi_eval = cur;
    }
    auto done = [&](const Evaluation& e) {
      return std::abs(e.psi) <= cfg_.refine_rel_tol * (2.0 * e.lambda / m_.M);
    };
    Evaluation best = cur;
    if (done(cur)) return accept_refined(best);
    int same_side = 0;
    double f_lo = lo_eval ? secant_value(*lo_eval) : 0.0;
    double f_hi = hi_eval ? secant_value(*hi_eval) : 0.0;
    for (std::size_t it = 0; it < cfg_.refine_max_iters; ++it) {
      const double w = hi - lo;
      if (!(w > 0.0)) break;
      double cand = 0.5 * (lo + hi);
      if (lo_eval && hi_eval && lo_eval->lambda > 0.0 && f_hi != f_lo) {
        const double sec = lo - f_lo * w / (f_hi - f_lo);
        if (sec > lo && sec < hi) cand = sec;
      }
      if (cand <= lo || cand >= hi) break;
      ++bisect_;
      Evaluation e = evaluate(cand, tol);
      if (e.breakdown) {
        lo = cand;
        lo_eval.reset();
        continue;
      }
      if (std::abs(e.psi) < std::abs(best.psi)) best = e;
      if (done(e)) break;
      if (e.psi < 0.0) {
        lo = cand;
        lo_eval = e;
        f_lo = secant_value(e);
        same_side = same_side < 0 ? same_side - 1 : -1;
        if (same_side <= -2) f_hi *= 0.5;
      } else {
        hi = cand;
        hi_eval = e;
        f_hi = secant_value(e);
        same_side = same_side > 0 ? same_side + 1 : 1;
        if (same_side >= 2) f_lo *= 0.5;
      }
    }
    return accept_refined(best);
  }

  std::optional<Evaluation> accept_refined(const Evaluation& e) {
    if (!acceptable(e)) return std::nullopt;
    return e;
  }

  SubproblemSolution& gradient_zero(const EigenPair& bottom, SubproblemSolution& sol) {
    sol.status = SolveStatus::GradientZero;
    if (bottom.value < 0.0) {
      Vector v = bottom.vector;
      orient(v);
      sol.lambda = -bottom.value;
      sol.s = (2.0 * sol.lambda / m_.M) * v;
    } else {
      sol.lambda = 0.0;
      sol.s = Vector(d_);
    }
    sol.r = model_grad(m_, sol.s);
    sol.model_value = model_value(m_, sol.s);
    sol.cg_total_iters = cg_total_;
    return sol;
  }

  void finish(SubproblemSolution& sol, const Evaluation& e) {
    sol.s = e.s;
    sol.lambda = e.lambda;
    sol.model_value = model_value(m_, sol.s);
    if (sol.model_value > 0.0) {
      sol.anomaly = true;
      sol.status = SolveStatus::ToleranceFloor;
      sol.s = Vector(d_);
      sol.model_value = 0.0;
    }
    sol.r = model_grad(m_, sol.s);
    sol.bisection_iters = bisect_;
    sol.cg_total_iters = cg_total_;
    sol.lambda_lo = bracket_lo_;
    sol.lambda_hi = bracket_hi_;
    sol.psi_lo = psi_lo_;
    sol.psi_hi = psi_hi_;
  }

  const CubicModel& m_;
  const SolverConfig& cfg_;
  std::size_t d_;
  std::size_t max_cg_ = 0;
  double gnorm_ = 0.0;
  double g_floor_ = 0.0;
  double floor_ = 0.0;
  double lambda_bar_ = 0.0;
  const EigenPair* bottom_ = nullptr;
  bool expanded_ = false;
  bool hard_case_ = false;
  std::size_t cg_total_ = 0;
  std::size_t bisect_ = 0;
  std::optional<Evaluation> best_;
  double best_need_ = std::numeric_limits<double>::infinity();
  double bracket_lo_ = 0.0;
  double bracket_hi_ = 0.0;
  double psi_lo_ = std::numeric_limits<double>::quiet_NaN();
  double psi_hi_ = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace

SubproblemSolution solve(const CubicModel& model, const SolverConfig& cfg) {
  model.validate();
  if (!(cfg.theta > 0.0 && cfg.theta <= 0.25)) {
    throw std::invalid_argument("solver: theta must lie in (0, 1/4]");
  }
  if (!(cfg.c_theta > 0.0)) throw std::invalid_argument("solver: c_theta must be > 0");
  if (model.dim() == 0) throw DimensionError("solver: empty model");
  SecularSolver solver(model, cfg);
  return solver.run();
}

SubproblemSolution solve_exact_reference(const CubicModel& model, double tol) {
  model.validate();
  const std::size_t d = model.dim();
  if (d == 0 || d > kExactReferenceMaxDim) {
    throw DimensionError("solve_exact_reference: dimension must lie in [1, 200]");
  }
  const Matrix h = model.H.dense_matrix() ? *model.H.dense_matrix() : model.H.materialize();
  const auto di = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd eh(di, di);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) eh(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h(i, j);
  eh.diagonal().array() += model.beta;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(eh);
  const Eigen::VectorXd lam = es.eigenvalues();
  const Eigen::MatrixXd& q = es.eigenvectors();
  Eigen::VectorXd eg(di);
  for (std::size_t i = 0; i < d; ++i) eg[static_cast<Eigen::Index>(i)] = model.g[i];
  const Eigen::VectorXd gamma = -(q.transpose() * eg);
  const double M = model.M;
  const double gnorm = eg.norm();
  const double spread = std::max(1.0, lam.cwiseAbs().maxCoeff());

  SubproblemSolution sol;
  sol.lambda_min_estimate = lam[0];
  auto to_vector = [&](const Eigen::VectorXd& v) {
    Vector out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = v[static_cast<Eigen::Index>(i)];
    return out;
  };
  auto bottom_vector = [&]() {
    Vector v = to_vector(q.col(0));
    orient(v);
    return v;
  };
  auto finish = [&](SubproblemSolution& s) {
    s.r = model_grad(model, s.s);
    s.model_value = model_value(model, s.s);
    if (norm(s.r) > tol * std::max(1.0, gnorm) && s.status != SolveStatus::GradientZero) {
      s.status = SolveStatus::ToleranceFloor;
    }
    return s;
  };

  if (gnorm == 0.0) {
    sol.status = SolveStatus::GradientZero;
    if (lam[0] < 0.0) {
      sol.lambda = -lam[0];
      sol.s = (2.0 * sol.lambda / M) * bottom_vector();
    } else {
      sol.s = Vector(d);
    }
    return finish(sol);
  }

  const double floor = std::max(0.0, -lam[0]);
  // Bottom eigenspace: eigenvalues within rounding of the smallest.
  Eigen::Index nb = 1;
  while (nb < di && lam[nb] - lam[0] <= 1e-12 * spread) ++nb;
  const double gamma_bottom = gamma.head(nb).norm();

  auto phi_rest = [&](double l, Eigen::Index from) {
    double s = 0.0;
    for (Eigen::Index i = from; i < di; ++i) {
      const double t = gamma[i] / (lam[i] + l);
      s += t * t;
    }
    return std::sqrt(s);
  };

  if (floor > 0.0 && gamma_bottom <= 1e-14 * gnorm && phi_rest(floor, nb) <= 2.0 * floor / M) {
    sol.hard_case = true;
    sol.lambda = floor;
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(di);
    for (Eigen::Index i = nb; i < di; ++i) coef[i] = gamma[i] / (lam[i] + floor);
    Vector s = to_vector(q * coef);
    const double target = 2.0 * floor / M;
    const double tau = std::sqrt(std::max(0.0, target * target - norm_squared(s)));
    axpy_inplace(tau, bottom_vector(), s.span());
    sol.s = std::move(s);
    sol.status = SolveStatus::Converged;
    return finish(sol);
  }

  auto phi = [&](double l) { return phi_rest(l, 0); };
  auto psi = [&](double l) { return 2.0 * l / M - phi(l); };
  double lo = floor;
  double hi = std::max(std::sqrt(gnorm * M), 2.0 * floor + 1e-300);
  while (!(psi(hi) >= 0.0)) {
    lo = hi;
    hi *= 2.0;
    sol.status = SolveStatus::BracketExpanded;
  }
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (psi(mid) < 0.0 ? lo : hi) = mid;
  }
  // Newton polish on 1/phi - M/(2 lambda), kept inside the bracket.
  double l = hi;
  for (int it = 0; it < 8; ++it) {
    const double p = phi(l);
    double s3 = 0.0;
    for (Eigen::Index i = 0; i < di; ++i) {
      const double t = lam[i] + l;
      s3 += gamma[i] * gamma[i] / (t * t * t);
    }
    const double h = 1.0 / p - M / (2.0 * l);
    const double dh = s3 / (p * p * p) + M / (2.0 * l * l);
    const double next = l - h / dh;
    if (!(next > floor) || !std::isfinite(next)) break;
    if (next == l) break;
    l = next;
  }
  sol.lambda = l;
  Eigen::VectorXd coef(di);
  for (Eigen::Index i = 0; i < di; ++i) coef[i] = gamma[i] / (lam[i] + l);
  sol.s = to_vector(q * coef);
  if (sol.status != SolveStatus::BracketExpanded) sol.status = SolveStatus::Converged;
  sol.lambda_lo = lo;
  sol.lambda_hi = hi;
  sol.psi_lo = psi(lo);
  sol.psi_hi = psi(hi);
  return finish(sol);
}

}  // namespace vrcn
