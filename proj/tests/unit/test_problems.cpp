#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "vrcn/constants.hpp"
#include "vrcn/errors.hpp"
#include "vrcn/krylov.hpp"
#include "vrcn/libsvm.hpp"
#include "vrcn/problems.hpp"

using namespace vrcn;

namespace {

Vector random_point(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector x(d);
  for (double& v : x) v = normal(rng);
  return x;
}

Matrix random_spd(std::mt19937_64& rng, std::size_t d, double shift) {
  std::normal_distribution<double> normal;
  Matrix b(d, d);
  for (double& v : b.flat()) v = normal(rng);
  Matrix a(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += b(i, k) * b(j, k);
      a(i, j) = s / static_cast<double>(d) + (i == j ? shift : 0.0);
    }
  return a;
}

std::vector<ProblemPtr> builtin_problems() {
  std::mt19937_64 rng(41);
  std::vector<ProblemPtr> out;
  out.push_back(make_logistic_l2(make_classification_dataset(30, 6, 0.1, 1), 0.1));
  out.push_back(make_nonconvex_logistic(make_classification_dataset(30, 6, 0.1, 2), 0.5));
  out.push_back(make_double_well(25, 5, 0.5, 3));
  std::vector<Matrix> as;
  std::vector<Vector> bs;
  for (int i = 0; i < 7; ++i) {
    as.push_back(random_spd(rng, 5, 0.5));
    bs.push_back(random_point(rng, 5));
  }
  out.push_back(make_quadratic(std::move(as), std::move(bs)));
  out.push_back(make_shared_hessian_quadratic(random_spd(rng, 5, 1.0), random_point(rng, 5), 9, 0.3, 4));
  return out;
}

double fd_derivative(const std::function<double(double)>& f, double h) {
  return (f(h) - f(-h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("logistic value at the origin is ln 2") {
  auto p = make_logistic_l2(make_classification_dataset(40, 3, 0.0, 5), 0.0);
  CHECK(std::abs(p->full_value(Vector(3)) - std::log(2.0)) <= 1e-15);
}

TEST_CASE("single-sample logistic gradient at zero") {
  Dataset data{Matrix::from_rows({{1.0}}), {1.0}};
  auto p = make_logistic_l2(std::move(data), 0.0);
  CHECK(p->component_grad(0, Vector{0.0})[0] == -0.5);
}

TEST_CASE("quadratic with identity Hessian") {
  auto p = make_quadratic({Matrix::identity(2)}, {Vector(2)});
  CHECK(p->full_grad(Vector{1, 1}) == Vector{1, 1});
  CHECK(p->known_optimum().has_value());
  CHECK(p->known_optimum()->value == 0.0);
}

TEST_CASE("logistic third-derivative constant") {
  CHECK(kLogisticThirdDerivativeMax == doctest::Approx(std::sqrt(3.0) / 18.0).epsilon(1e-15));
  // Independent grid search on |s(1-s)(1-2s)|.
  double best = 0.0;
  for (int k = -200000; k <= 200000; ++k) {
    const double t = k * 1e-4;
    const double s = 1.0 / (1.0 + std::exp(-t));
    best = std::max(best, std::abs(s * (1.0 - s) * (1.0 - 2.0 * s)));
  }
  CHECK(best <= kLogisticThirdDerivativeMax);
  CHECK(best >= kLogisticThirdDerivativeMax * (1.0 - 1e-8));

  auto p = make_logistic_l2(make_classification_dataset(10, 4, 0.0, 3), 0.2);
  const auto k = p->analytic_constants();
  REQUIRE(k.L2.has_value());
  CHECK(*k.L2 == doctest::Approx(kLogisticThirdDerivativeMax).epsilon(1e-12));  // unit rows
  CHECK(*k.LH == doctest::Approx(0.25 + 0.2).epsilon(1e-12));
}

TEST_CASE("logistic hvp agrees with the dense Hessian") {
  std::mt19937_64 rng(8);
  Dataset data = make_classification_dataset(20, 10, 0.1, 9);
  for (double& v : data.features.flat()) v *= 2.0;
  for (auto p : {make_logistic_l2(data, 0.3), make_nonconvex_logistic(data, 0.3)}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Vector x = random_point(rng, 10);
      const Vector v = random_point(rng, 10);
      for (std::size_t i = 0; i < p->n(); ++i) {
        const Vector hv = p->component_hvp(i, x, v);
        const Vector dense = matvec(p->component_hessian_dense(i, x), v);
        CHECK(norm(hv - dense) <= 1e-10 * (1.0 + norm(dense)));
      }
    }
  }
}

TEST_CASE("nonconvex regularizer at the origin") {
  const double lam = 0.7;
  Dataset data{Matrix::from_rows({{0.5}, {-1.5}, {2.0}}), {1.0, -1.0, 1.0}};
  auto plain = make_logistic_l2(data, 0.0);
  auto reg = make_nonconvex_logistic(data, lam);
  const Vector zero{0.0};
  CHECK(reg->full_value(zero) - plain->full_value(zero) == 0.0);
  CHECK(reg->full_grad(zero)[0] - plain->full_grad(zero)[0] == 0.0);
  const double curvature = reg->full_hess_dense(zero)(0, 0) - plain->full_hess_dense(zero)(0, 0);
  CHECK(curvature == doctest::Approx(2.0 * lam).epsilon(1e-14));
  // second difference of r(x) = lam x^2 / (1 + x^2)
  auto r = [&](double x) { return reg->full_value(Vector{x}) - plain->full_value(Vector{x}); };
  const double h = 1e-4;
  CHECK(std::abs((r(h) - 2 * r(0.0) + r(-h)) / (h * h) - 2.0 * lam) <= 1e-5);
}

TEST_CASE("double well with zero shifts") {
  auto p = make_double_well(4, 1, 0.0, 0);
  CHECK(p->full_value(Vector{1.0}) == -0.25);
  CHECK(p->full_value(Vector{-1.0}) == -0.25);
  for (double s : {-1.0, 0.0, 1.0}) CHECK(p->full_grad(Vector{s})[0] == 0.0);
  CHECK(p->full_hess_dense(Vector{0.0})(0, 0) == -1.0);
  CHECK(lanczos_lambda_min(p->full_hess(Vector{0.0}), 1, 1, 0) == doctest::Approx(-1.0));
  const auto opt = p->known_optimum();
  REQUIRE(opt.has_value());
  CHECK(opt->value == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(std::abs(opt->x[0]) == doctest::Approx(1.0).epsilon(1e-10));
  const auto k = p->analytic_constants();
  CHECK(*k.L2 == 12.0);
}

TEST_CASE("double well Lipschitz bound dominates sampled ratios on the box") {
  auto p = make_double_well(16, 3, 0.4, 12);
  const double l2 = *p->analytic_constants().L2;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vector x(3), y(3);
    for (std::size_t j = 0; j < 3; ++j) {
      x[j] = u(rng);
      y[j] = u(rng);
    }
    const double ratio =
        symmetric_operator_norm(p->full_hess_dense(x) - p->full_hess_dense(y)) / norm(x - y);
    CHECK(ratio <= l2 + 1e-12);
  }
}

TEST_CASE("double well optimum is a global minimizer") {
  auto p = make_double_well(10, 4, 0.8, 77);
  const auto opt = *p->known_optimum();
  CHECK(norm(p->full_grad(opt.x)) <= 1e-10);
  CHECK(lanczos_lambda_min(p->full_hess(opt.x), 1, 4, 1) > 0.0);
  CHECK(std::abs(p->full_value(opt.x) - opt.value) <= 1e-12);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    CHECK(p->full_value(random_point(rng, 4, 1.5)) >= opt.value - 1e-12);
  }
}

TEST_CASE("finite-sum consistency on built-in problems") {
  std::mt19937_64 rng(13);
  for (const auto& p : builtin_problems()) {
    CAPTURE(p->kind());
    for (int trial = 0; trial < 20; ++trial) {
      const Vector x = random_point(rng, p->d());
      Vector sum(p->d());
      for (std::size_t i = 0; i < p->n(); ++i) sum += p->component_grad(i, x);
      sum *= 1.0 / static_cast<double>(p->n());
      CHECK(norm(p->full_grad(x) - sum) <= 1e-12);
    }
  }
}

TEST_CASE("gradients and Hessian-vector products match finite differences") {
  std::mt19937_64 rng(19);
  for (const auto& p : builtin_problems()) {
    CAPTURE(p->kind());
    const std::size_t d = p->d();
    for (int trial = 0; trial < 5; ++trial) {
      const Vector x = random_point(rng, d);
      // full gradient vs central differences of the full value
      Vector fd(d);
      for (std::size_t j = 0; j < d; ++j) {
        fd[j] = fd_derivative(
            [&](double h) {
              Vector y = x;
              y[j] += h;
              return p->full_value(y);
            },
            1e-5);
      }
      const Vector g = p->full_grad(x);
      CHECK(norm(g - fd) <= 1e-5 * std::max(1.0, norm(g)));

      const std::size_t i = trial % p->n();
      Vector cfd(d);
      for (std::size_t j = 0; j < d; ++j) {
        cfd[j] = fd_derivative(
            [&](double h) {
              Vector y = x;
              y[j] += h;
              return p->component_value(i, y);
            },
            1e-5);
      }
      const Vector gi = p->component_grad(i, x);
      CHECK(norm(gi - cfd) <= 1e-5 * std::max(1.0, norm(gi)));

      const Vector v = random_point(rng, d);
      const double h = 1e-6;
      const Vector hv_fd = (1.0 / (2.0 * h)) * (p->component_grad(i, x + h * v) - p->component_grad(i, x - h * v));
      const Vector hv = p->component_hvp(i, x, v);
      CHECK(norm(hv - hv_fd) <= 1e-4 * std::max(1.0, norm(hv)));
      CHECK(is_symmetric(p->component_hessian_dense(i, x), 1e-12));
    }
  }
}

TEST_CASE("convex logistic has a PSD Hessian") {
  std::mt19937_64 rng(23);
  auto p = make_logistic_l2(make_classification_dataset(50, 8, 0.1, 6), 0.01);
  CHECK(p->convex());
  for (int trial = 0; trial < 20; ++trial) {
    CHECK(symmetric_eigenvalues(p->full_hess_dense(random_point(rng, 8, 3.0)))[0] >= -1e-10);
  }
}

TEST_CASE("component index is range checked") {
  auto p = make_double_well(3, 2, 0.1, 1);
  CHECK_THROWS_AS(p->component_grad(3, Vector(2)), std::out_of_range);
  CHECK_THROWS_AS(p->full_grad(Vector(3)), DimensionError);
  CHECK_THROWS_AS(make_logistic_l2(Dataset{Matrix(0, 2), {}}, 0.0), std::invalid_argument);
}

TEST_CASE("libsvm parsing") {
  SUBCASE("example line") {
    std::istringstream in("+1 1:0.5 3:2\n");
    LibsvmOptions opt;
    opt.dim = 3;
    const Dataset data = parse_libsvm(in, opt);
    CHECK(data.features.rows() == 1);
    CHECK(data.features(0, 0) == 0.5);
    CHECK(data.features(0, 1) == 0.0);
    CHECK(data.features(0, 2) == 2.0);
    CHECK(data.labels[0] == 1.0);
  }
  SUBCASE("empty input") {
    std::istringstream in("");
    CHECK_THROWS_WITH_AS(parse_libsvm(in), "no samples", ParseError);
  }
  SUBCASE("malformed line reports its number") {
    std::istringstream in("+1 1:0.5\n-1 2:abc\n");
    try {
      parse_libsvm(in);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("non-binary labels") {
    std::istringstream in("+1 1:1\n3 1:2\n");
    CHECK_THROWS_AS(parse_libsvm(in), ParseError);
  }
  SUBCASE("indices must increase") {
    std::istringstream in("+1 2:1 1:2\n");
    CHECK_THROWS_AS(parse_libsvm(in), ParseError);
  }
  SUBCASE("index beyond the declared dimension") {
    std::istringstream in("+1 4:1\n");
    LibsvmOptions opt;
    opt.dim = 3;
    CHECK_THROWS_AS(parse_libsvm(in, opt), ParseError);
  }
  SUBCASE("row normalization") {
    std::istringstream in("-1 1:3 2:4\n");
    LibsvmOptions opt;
    opt.normalize_rows = true;
    const Dataset data = parse_libsvm(in, opt);
    CHECK(data.features(0, 0) == doctest::Approx(0.6));
    CHECK(data.labels[0] == -1.0);
  }
}

TEST_CASE("libsvm round trip") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.3);
  Dataset data{Matrix(10, 5), std::vector<double>(10)};
  for (double& v : data.features.flat()) v = coin(rng) ? 0.0 : normal(rng);
  for (double& b : data.labels) b = coin(rng) ? -1.0 : 1.0;
  std::stringstream buf;
  write_libsvm(buf, data);
  LibsvmOptions opt;
  opt.dim = 5;
  const Dataset back = parse_libsvm(buf, opt);
  CHECK(back.labels == data.labels);
  double worst = 0.0;
  for (std::size_t k = 0; k < 50; ++k) worst = std::max(worst, std::abs(back.features.flat()[k] - data.features.flat()[k]));
  CHECK(worst <= 1e-12);
}

TEST_CASE("constant estimation") {
  std::mt19937_64 rng(37);
  SUBCASE("constant Hessian gives L2 = 0") {
    std::vector<Matrix> as;
    std::vector<Vector> bs;
    for (int i = 0; i < 6; ++i) {
      as.push_back(random_spd(rng, 4, 0.2));
      bs.push_back(random_point(rng, 4));
    }
    auto p = make_quadratic(as, bs);
    const ProblemConstants c = estimate_constants(*p, 4, 8, 1);
    CHECK(c.L2 == 0.0);
    CHECK(c.sigma2 == doctest::Approx(*p->analytic_constants().sigma2).epsilon(1e-12));
  }
  SUBCASE("identical components have zero variance") {
    Dataset one = make_classification_dataset(1, 5, 0.0, 4);
    Dataset rep{Matrix(12, 5), std::vector<double>(12, one.labels[0])};
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 5; ++j) rep.features(i, j) = one.features(0, j);
    const ProblemConstants c = estimate_constants(*make_nonconvex_logistic(rep, 0.2), 4, 4, 2);
    CHECK(c.sigma1 <= 1e-14);  // summation rounding only
    CHECK(c.sigma2 <= 1e-14);
  }
  SUBCASE("same seed reproduces the estimates bitwise") {
    auto p = make_logistic_l2(make_classification_dataset(50, 5, 0.1, 8), 0.05);
    const ProblemConstants a = estimate_constants(*p, 6, 10, 99);
    const ProblemConstants b = estimate_constants(*p, 6, 10, 99);
    CHECK(a.L2 == b.L2);
    CHECK(a.LH == b.LH);
    CHECK(a.sigma1 == b.sigma1);
    CHECK(a.sigma2 == b.sigma2);
    // sampled L2 never exceeds the analytic bound
    CHECK(a.L2 <= *p->analytic_constants().L2 * (1.0 + 1e-9));
  }
}

TEST_CASE("resolve_constants prefers overrides, then analytic bounds") {
  auto p = make_logistic_l2(make_classification_dataset(30, 4, 0.1, 8), 0.1);
  ResolveOptions opt;
  opt.overrides.sigma1 = 0.0;
  const ResolvedConstants r = resolve_constants(*p, opt);
  CHECK(r.sigma1_source == ConstantSource::Override);
  CHECK(r.L2_source == ConstantSource::Analytic);
  CHECK(r.sigma2_source == ConstantSource::Estimated);
  CHECK(r.values.sigma1 == 0.0);
  CHECK(r.values.L2 == *p->analytic_constants().L2);
  const ProblemConstants est = estimate_constants(*p, opt.estimate);
  CHECK(r.values.sigma2 == 1.5 * est.sigma2);
}
