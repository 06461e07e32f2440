#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "vrcn/errors.hpp"
#include "vrcn/krylov.hpp"
#include "vrcn/linalg.hpp"

using namespace vrcn;

namespace {

Matrix random_symmetric(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> normal;
  Matrix m(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      const double v = normal(rng);
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  return m;
}

Vector random_vector(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> normal;
  Vector v(d);
  for (double& x : v) x = normal(rng);
  return v;
}

}  // namespace

TEST_CASE("vector algebra examples") {
  CHECK(dot(Vector{1, 2}, Vector{3, 4}) == 11.0);
  CHECK(norm(Vector{3, 4}) == 5.0);
  CHECK(axpy(2.0, Vector{1, 0}, Vector{0, 1}) == Vector{2, 1});
  CHECK(scale(3.0, Vector{1, -2}) == Vector{3, -6});
  CHECK_THROWS_AS(dot(Vector{1, 2}, Vector{1}), DimensionError);
  CHECK_THROWS_AS(axpy(1.0, Vector{1, 2}, Vector{1}), DimensionError);
}

TEST_CASE("vector identities hold on small-integer inputs") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(-8, 8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + trial % 13;
    Vector x(d), y(d), z(d);
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = u(rng) / 4.0;
      y[i] = u(rng) / 4.0;
      z[i] = u(rng) / 4.0;
    }
    const double a = u(rng) / 2.0;
    CHECK(std::abs(dot(x, y) - dot(y, x)) <= 1e-14);
    CHECK(std::abs(dot(axpy(a, x, y), z) - (a * dot(x, z) + dot(y, z))) <= 1e-14 * (1 + std::abs(dot(y, z))));
    CHECK(std::abs(norm_squared(x) - dot(x, x)) <= 1e-14);
    CHECK(std::abs(norm(scale(a, x)) - std::abs(a) * norm(x)) <= 1e-14 * (1 + norm(x)));
  }
}

TEST_CASE("non-finite input is rejected") {
  Vector bad{1.0, std::nan("")};
  CHECK_THROWS_AS(require_finite(bad, "test"), NumericError);
  auto a = SymmetricOperator::dense(Matrix::identity(2));
  CHECK_THROWS_AS(cg_solve(a, bad), NumericError);
}

TEST_CASE("dense operators are symmetric and linear") {
  std::mt19937_64 rng(5);
  const Matrix m = random_symmetric(rng, 12);
  CHECK(is_symmetric(m));
  auto op = SymmetricOperator::dense(m);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector v = random_vector(rng, 12);
    const Vector w = random_vector(rng, 12);
    const double a = 0.7;
    const double b = -1.3;
    const Vector lhs = op.apply(a * v + b * w);
    const Vector rhs = a * op.apply(v) + b * op.apply(w);
    CHECK(norm(lhs - rhs) <= 1e-12 * (norm(op.apply(v)) + norm(op.apply(w))));
  }
  auto free_op = SymmetricOperator::matrix_free(
      12, [&m](std::span<const double> v, std::span<double> out) { matvec_into(m, v, out); });
  CHECK(free_op.materialize() == m);
  CHECK(free_op.diagonal() == m.diag());
  const Vector v = random_vector(rng, 12);
  CHECK(norm(free_op.shifted(2.0).apply(v) - op.shifted(2.0).apply(v)) <= 1e-12);
  CHECK(norm(free_op.minus(op).apply(v)) == 0.0);
  CHECK(norm(op.scaled(-2.0).apply(v) + 2.0 * op.apply(v)) <= 1e-12);
}

TEST_CASE("cg_solve examples") {
  SUBCASE("zero operator with unit shift") {
    auto res = cg_solve(SymmetricOperator::zero(2), Vector{3, 4}, 1.0, 1e-10, 100);
    CHECK(res.x == Vector{3, 4});
    CHECK(res.report.iterations == 1);
    CHECK_FALSE(res.report.breakdown);
  }
  SUBCASE("diagonal system") {
    auto res = cg_solve(SymmetricOperator::dense(Matrix::diagonal(Vector{1, 3})), Vector{1, 3},
                        0.0, 1e-12, 100);
    CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.x[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("negative curvature") {
    auto res = cg_solve(SymmetricOperator::dense(Matrix::diagonal(Vector{-2, 1})), Vector{1, 0},
                        1.0, 1e-10, 100);
    CHECK(res.report.breakdown);
    CHECK(res.report.iterations == 0);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(cg_solve(SymmetricOperator::zero(3), Vector{1, 2}), DimensionError);
  }
}

TEST_CASE("cg matches a direct solve on SPD systems") {
  std::mt19937_64 rng(17);
  for (std::size_t d : {5u, 20u, 60u, 100u}) {
    CAPTURE(d);
    Matrix b = random_symmetric(rng, d);
    Matrix a(d, d);
    // a = b b^T / d + I, well conditioned
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += b(i, k) * b(j, k);
        a(i, j) = s / static_cast<double>(d) + (i == j ? 1.0 : 0.0);
      }
    }
    const Vector rhs = random_vector(rng, d);
    Eigen::MatrixXd ea(d, d);
    Eigen::VectorXd eb(d);
    for (std::size_t i = 0; i < d; ++i) {
      eb[i] = rhs[i];
      for (std::size_t j = 0; j < d; ++j) ea(i, j) = a(i, j);
    }
    const Eigen::VectorXd direct = ea.ldlt().solve(eb);
    const double cond = [&] {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ea);
      return es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
    }();
    for (bool jacobi : {false, true}) {
      auto res = cg_solve(SymmetricOperator::dense(a), rhs, CgOptions{0.0, 1e-10, 1000, jacobi});
      double err = 0.0;
      double scale = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        err += (res.x[i] - direct[i]) * (res.x[i] - direct[i]);
        scale += direct[i] * direct[i];
      }
      CHECK(std::sqrt(err / scale) <= 1e-10 * cond * 10);
      CHECK(norm(SymmetricOperator::dense(a).apply(res.x) - rhs) <= 1e-10 * norm(rhs));
    }
  }
}

TEST_CASE("lanczos_lambda_min examples") {
  auto diag = SymmetricOperator::dense(Matrix::diagonal(Vector{-1, 0, 5}));
  CHECK(std::abs(lanczos_lambda_min(diag, 1, 10, 1) + 1.0) <= 1e-8);
  auto id = SymmetricOperator::dense(Matrix::identity(7));
  CHECK(std::abs(lanczos_lambda_min(id, 1, 10, 1) - 1.0) <= 1e-10);

  std::mt19937_64 rng(23);
  const Matrix m = random_symmetric(rng, 50);
  const double exact = symmetric_eigenvalues(m)[0];
  CHECK(std::abs(lanczos_lambda_min(SymmetricOperator::dense(m), 2, 50, 9) - exact) <= 1e-6);
}

TEST_CASE("lanczos estimates agree with the dense eigensolver up to d = 200") {
  std::mt19937_64 rng(29);
  for (std::size_t d : {3u, 17u, 80u, 200u}) {
    const Matrix m = random_symmetric(rng, d);
    const Vector ev = symmetric_eigenvalues(m);
    auto op = SymmetricOperator::dense(m);
    const double lo = lanczos_lambda_min(op, 1, d, 4);
    CHECK(lo >= ev[0] - 1e-8);
    CHECK(std::abs(lo - ev[0]) <= 1e-6);
    CHECK(std::abs(lanczos_lambda_max(op, 1, d, 4) - ev[d - 1]) <= 1e-6);
    CHECK(std::abs(lanczos_operator_norm(op, d, 4) - symmetric_operator_norm(m)) <= 1e-6);
    EigenPair pair = lanczos_bottom(op, d, 4);
    CHECK(norm(op.apply(pair.vector) - pair.value * pair.vector) <= 1e-6 * (1 + std::abs(ev[0])));
  }
}

TEST_CASE("lanczos_lambda_min does not degrade with more iterations") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m = random_symmetric(rng, 40);
    auto op = SymmetricOperator::dense(m);
    double prev = lanczos_lambda_min(op, 1, 1, 100 + trial);
    for (std::size_t it = 2; it <= 40; ++it) {
      const double cur = lanczos_lambda_min(op, 1, it, 100 + trial);
      CHECK(cur <= prev + 1e-10);
      prev = cur;
    }
  }
}
