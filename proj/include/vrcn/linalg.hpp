#pragma once

// Dense vectors and matrices plus the symmetric-operator abstraction shared by
// the Krylov solvers, the estimators and the cubic subproblem solver.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

namespace vrcn {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t d, double fill = 0.0) : data_(d, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}
  explicit Vector(std::span<const double> values) : data_(values.begin(), values.end()) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  operator std::span<const double>() const noexcept { return data_; }

  const std::vector<double>& values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  void fill(double v);
  Vector& operator+=(const Vector& other);
  Vector& operator-=(const Vector& other);
  Vector& operator*=(double a);

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

Vector operator+(Vector a, const Vector& b);
Vector operator-(Vector a, const Vector& b);
Vector operator*(double a, Vector v);
Vector operator-(Vector v);

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  static Matrix identity(std::size_t d);
  static Matrix diagonal(std::span<const double> diag);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  Vector diag() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double a);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double a, Matrix m);

void require_same_dim(std::size_t a, std::size_t b, const char* what);
bool all_finite(std::span<const double> v);
void require_finite(std::span<const double> v, const char* what);

double dot(std::span<const double> x, std::span<const double> y);
double norm(std::span<const double> x);
double norm_squared(std::span<const double> x);
// a*x + y
Vector axpy(double a, const Vector& x, const Vector& y);
// y += a*x
void axpy_inplace(double a, std::span<const double> x, std::span<double> y);
Vector scale(double a, Vector x);

Vector matvec(const Matrix& a, std::span<const double> x);
void matvec_into(const Matrix& a, std::span<const double> x, std::span<double> y);
// m += alpha * x x^T
void add_outer(Matrix& m, double alpha, std::span<const double> x);
// m += alpha * (x y^T + y x^T)
void add_sym_outer(Matrix& m, double alpha, std::span<const double> x, std::span<const double> y);
// m += alpha * other
void add_scaled(Matrix& m, double alpha, const Matrix& other);

double frobenius_norm(const Matrix& m);
double max_abs_asymmetry(const Matrix& m);
bool is_symmetric(const Matrix& m, double rel_tol = 1e-12);

// Symmetric linear operator v -> Hv, either backed by a dense matrix or by an
// arbitrary apply function. Copies share the underlying storage; it is never
// mutated after construction.
class SymmetricOperator {
 public:
  using ApplyFn = std::function<void(std::span<const double>, std::span<double>)>;

  SymmetricOperator() = default;
  static SymmetricOperator dense(Matrix m);
  static SymmetricOperator matrix_free(std::size_t dim, ApplyFn apply);
  static SymmetricOperator zero(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  void apply_into(std::span<const double> v, std::span<double> out) const;
  Vector apply(std::span<const double> v) const;

  // Present only for dense-backed operators.
  const Matrix* dense_matrix() const noexcept { return dense_.get(); }
  // Diagonal; dense-backed operators read it, matrix-free ones probe with unit vectors.
  Vector diagonal() const;
  // Materializes by applying to the unit vectors when no dense form exists.
  Matrix materialize() const;

  // (this) + shift * I, same backing kind.
  SymmetricOperator shifted(double shift) const;
  SymmetricOperator scaled(double a) const;
  // this - other; dense if both are dense.
  SymmetricOperator minus(const SymmetricOperator& other) const;

 private:
  std::size_t dim_ = 0;
  std::shared_ptr<const Matrix> dense_;
  ApplyFn apply_;
};

}  // namespace vrcn
