#include <cmath>
#include <random>

#include <json.hpp>

#include "doctest.h"
#include "vrcn/constants.hpp"
#include "vrcn/verification.hpp"

using namespace vrcn;

TEST_CASE("identity suite") {
  const CheckResult r = check_identity_suite(500, 1);
  CHECK(r.passed);
  CHECK(r.measured[0] <= 1e-10);
  // s = 0 alone gives an exact zero defect.
  const CheckResult single = check_identity_suite(1, 2);
  CHECK(single.measured[0] == 0.0);
}

TEST_CASE("model upper bound on solver steps") {
  const std::vector<double> thetas{0.25};
  const CheckResult r = check_model_upper(200, thetas, 3);
  CHECK(r.passed);
  CHECK(r.measured[0] == 0.0);
  CHECK(r.measured[3] > 150);
}

TEST_CASE("exact step with zero Hessian in one dimension") {
  // |s|^2 = 2|g|/M, so m(s) = -(M/3)|s|^3 while the bound reads -(M/12)|s|^3.
  const CubicModel m{Vector{2.0}, SymmetricOperator::dense(Matrix(1, 1)), 0.0, 4.0};
  const SubproblemSolution sol = solve_exact_reference(m);
  const double ns = std::abs(sol.s[0]);
  CHECK(ns == doctest::Approx(1.0));
  CHECK(sol.model_value == doctest::Approx(-(4.0 / 3.0) * ns * ns * ns));
  CHECK(sol.model_value < -(4.0 / 12.0) * ns * ns * ns);
}

TEST_CASE("oracle equivalence on a reduced set") {
  const CheckResult r = check_oracle_equivalence(40, 1e-4, 4);
  CHECK(r.passed);
}

TEST_CASE("moving-average weight statistics") {
  const EmaWeightStats st = ema_weight_stats(0.5, 10000);
  CHECK(st.sup == doctest::Approx(1.535533905932738).epsilon(1e-12));
  CHECK(st.argsup == 1);
  CHECK(st.sup_recursive == doctest::Approx(0.6381741511499641).epsilon(1e-9));
  CHECK(st.max_sum_defect <= 1e-12);
  CHECK(st.doubling_ratio == doctest::Approx(std::pow(2.0, -0.5)).epsilon(0.02));
  CHECK(ema_weights(EmaSchedule{}, 0) == std::vector<double>{1.0});

  const std::vector<double> ok{0.3, 0.5};
  CHECK(check_ema_weight_bound(ok, 2000).passed);
  const std::vector<double> small{0.1};
  const CheckResult r = check_ema_weight_bound(small, 2000);
  CHECK_FALSE(r.passed);
  CHECK(r.measured[0] == doctest::Approx(14.550328476154341).epsilon(1e-9));
}

TEST_CASE("variance scalings, unbiasedness, one-step bound") {
  const ProblemPtr p = make_logistic_l2(make_classification_dataset(64, 5, 0.1, 5), 0.1);
  VarianceOptions opt;
  opt.trials = 600;
  opt.probe_trials = 100;
  const CheckResult v = check_variance_scalings(*p, opt, 6);
  CHECK(v.passed);
  CHECK(v.measured.size() == 5);
  CHECK(check_martingale_unbiasedness(*p, 3000, 7).passed);
  CHECK(check_hutchinson_unbiasedness(*p, 3000, 8).passed);

  const ProblemPtr well = make_double_well(32, 6, 0.3, 9);
  ResolveOptions ro;
  const ProblemConstants k = resolve_constants(*well, ro).values;
  const CheckResult s = check_one_step_bound(*well, k, Vector(6, 2.0), 40);
  CHECK(s.passed);
  CHECK(s.measured[2] >= 3);
}

TEST_CASE("termination check and inexactness audit") {
  const ProblemPtr well = make_double_well(64, 10, 0.3, 10);
  ResolveOptions ro;
  SospCase c;
  c.name = "double_well";
  c.constants = resolve_constants(*well, ro).values;
  c.problem = well;
  c.config.epsilon = 1e-2;
  c.config.b = 64;
  c.config.fixed_alpha = 1.0;
  const std::vector<SospCase> cases{c};
  InexactnessAudit audit;
  const SospOutcome out = check_sosp_at_termination(cases, 4, 11, audit.observer());
  CHECK(out.runs.size() == 4);
  CHECK(out.result.passed);
  CHECK(out.result.measured[4] == 4.0);
  const CheckResult a = audit.result("audit");
  CHECK(a.passed);
  CHECK(audit.accepted() > 4);
  CHECK(audit.violations() == 0);
}

TEST_CASE("audit flags a step that misses the conditions") {
  InexactnessAudit audit;
  const CubicModel m{Vector{1.0, 0.0}, SymmetricOperator::dense(Matrix(2, 2)), 0.0, 2.0};
  SubproblemSolution sol;
  sol.s = Vector{-0.5, 0.0};
  audit.observe(StepAudit{0, 1, &m, &sol, true, 0.1});
  sol.s = Vector{-1.0, 0.0};
  audit.observe(StepAudit{0, 2, &m, &sol, true, 0.1});
  audit.observe(StepAudit{0, 3, &m, &sol, false, 0.1});
  CHECK(audit.violations() == 1);
  CHECK(audit.accepted() == 2);
  CHECK_FALSE(audit.result("audit").passed);
}

TEST_CASE("accounting check on the main method and baselines") {
  const ProblemPtr p = make_nonconvex_logistic(make_classification_dataset(100, 5, 0.1, 12), 0.1);
  ResolveOptions ro;
  const ProblemConstants k = resolve_constants(*p, ro).values;
  RunConfig cfg;
  cfg.max_total_iters = 60;
  CHECK(check_accounting(run(*p, Regime::NonconvexPlain, cfg, k), 100).passed);
  for (Baseline b : {Baseline::FullCRN, Baseline::SubsampledCRN, Baseline::SarahGD}) {
    CHECK(check_accounting(run_baseline(*p, b, cfg, k), 100).passed);
  }
  RunResult tampered = run(*p, Regime::NonconvexPlain, cfg, k);
  tampered.summary.totals.grad_paper += 1;
  CHECK_FALSE(check_accounting(tampered, 100).passed);
}

TEST_CASE("result emission") {
  std::vector<CheckResult> rs(2);
  rs[0].name = "a";
  rs[0].passed = true;
  rs[0].measured = {1.0};
  rs[1].name = "longer name";
  const nlohmann::json j = nlohmann::json::parse(results_json(rs));
  REQUIRE(j.is_array());
  CHECK(j.size() == 2);
  CHECK(j[0]["passed"] == true);
  CHECK(j[1]["name"] == "longer name");
  const std::string table = results_table(rs);
  CHECK(table.find("PASS") != std::string::npos);
  CHECK(table.find("FAIL") != std::string::npos);
}
