#include "vrcn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vrcn/errors.hpp"
#include "vrcn/kernels.hpp"

namespace vrcn {

void Vector::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Vector& Vector::operator+=(const Vector& other) {
  require_same_dim(size(), other.size(), "Vector +=");
  kernels::active().axpy(1.0, other.data(), data(), size());
  return *this;
}

Vector& Vector::operator-=(const Vector& other) {
  require_same_dim(size(), other.size(), "Vector -=");
  kernels::active().axpy(-1.0, other.data(), data(), size());
  return *this;
}

Vector& Vector::operator*=(double a) {
  kernels::active().scal(a, data(), size());
  return *this;
}

Vector operator+(Vector a, const Vector& b) { return a += b; }
Vector operator-(Vector a, const Vector& b) { return a -= b; }
Vector operator*(double a, Vector v) { return v *= a; }
Vector operator-(Vector v) {
  for (double& x : v) x = -x;
  return v;
}

Matrix Matrix::identity(std::size_t d) {
  Matrix m(d, d);
  for (std::size_t i = 0; i < d; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Matrix::from_rows: ragged rows");
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Vector Matrix::diag() const {
  const std::size_t d = std::min(rows_, cols_);
  Vector out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = (*this)(i, i);
  return out;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  add_scaled(*this, 1.0, other);
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  add_scaled(*this, -1.0, other);
  return *this;
}

Matrix& Matrix::operator*=(double a) {
  kernels::active().scal(a, data(), data_.size());
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double a, Matrix m) { return m *= a; }

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(std::span<const double> v, const char* what) {
  if (!all_finite(v)) throw NumericError(std::string(what) + ": non-finite entry");
}

double dot(std::span<const double> x, std::span<const double> y) {
  require_same_dim(x.size(), y.size(), "dot");
  return kernels::active().dot(x.data(), y.data(), x.size());
}

double norm_squared(std::span<const double> x) {
  return kernels::active().dot(x.data(), x.data(), x.size());
}

double norm(std::span<const double> x) {
  return std::sqrt(norm_squared(x));
}

Vector axpy(double a, const Vector& x, const Vector& y) {
  Vector out = y;
  axpy_inplace(a, x, out.span());
  return out;
}

void axpy_inplace(double a, std::span<const double> x, std::span<double> y) {
  require_same_dim(x.size(), y.size(), "axpy");
  kernels::active().axpy(a, x.data(), y.data(), x.size());
}

Vector scale(double a, Vector x) { return x *= a; }

Vector matvec(const Matrix& a, std::span<const double> x) {
  Vector y(a.rows());
  matvec_into(a, x, y.span());
  return y;
}

void matvec_into(const Matrix& a, std::span<const double> x, std::span<double> y) {
  require_same_dim(a.cols(), x.size(), "matvec (cols vs x)");
  require_same_dim(a.rows(), y.size(), "matvec (rows vs y)");
  kernels::active().gemv(a.data(), a.rows(), a.cols(), x.data(), y.data());
}

void add_outer(Matrix& m, double alpha, std::span<const double> x) {
  require_same_dim(m.rows(), x.size(), "add_outer");
  require_same_dim(m.cols(), x.size(), "add_outer");
  kernels::active().syr(alpha, x.data(), m.data(), x.size());
}

void add_sym_outer(Matrix& m, double alpha, std::span<const double> x,
                   std::span<const double> y) {
  require_same_dim(x.size(), y.size(), "add_sym_outer");
  require_same_dim(m.rows(), x.size(), "add_sym_outer");
  require_same_dim(m.cols(), x.size(), "add_sym_outer");
  kernels::active().syr2(alpha, x.data(), y.data(), m.data(), x.size());
}

void add_scaled(Matrix& m, double alpha, const Matrix& other) {
  require_same_dim(m.rows(), other.rows(), "add_scaled (rows)");
  require_same_dim(m.cols(), other.cols(), "add_scaled (cols)");
  kernels::active().axpy(alpha, other.data(), m.data(), m.rows() * m.cols());
}

double frobenius_norm(const Matrix& m) { return norm(m.flat()); }

double max_abs_asymmetry(const Matrix& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = i + 1; j < m.cols(); ++j) {
      worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
    }
  }
  return worst;
}

bool is_symmetric(const Matrix& m, double rel_tol) {
  if (!m.square()) return false;
  double scale = 0.0;
  for (double v : m.flat()) scale = std::max(scale, std::abs(v));
  return max_abs_asymmetry(m) <= rel_tol * std::max(scale, 1e-300);
}

SymmetricOperator SymmetricOperator::dense(Matrix m) {
  if (!m.square()) throw DimensionError("SymmetricOperator::dense: matrix is not square");
  SymmetricOperator op;
  op.dim_ = m.rows();
  op.dense_ = std::make_shared<const Matrix>(std::move(m));
  return op;
}

SymmetricOperator SymmetricOperator::matrix_free(std::size_t dim, ApplyFn apply) {
  SymmetricOperator op;
  op.dim_ = dim;
  op.apply_ = std::move(apply);
  return op;
}

SymmetricOperator SymmetricOperator::zero(std::size_t dim) {
  return matrix_free(dim, [](std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  });
}

void SymmetricOperator::apply_into(std::span<const double> v, std::span<double> out) const {
  require_same_dim(dim_, v.size(), "SymmetricOperator::apply (input)");
  require_same_dim(dim_, out.size(), "SymmetricOperator::apply (output)");
  if (dense_) {
    matvec_into(*dense_, v, out);
  } else {
    apply_(v, out);
  }
}

Vector SymmetricOperator::apply(std::span<const double> v) const {
  Vector out(dim_);
  apply_into(v, out.span());
  return out;
}

Vector SymmetricOperator::diagonal() const {
  if (dense_) return dense_->diag();
  Vector diag(dim_);
  Vector e(dim_);
  Vector col(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    e[i] = 1.0;
    apply_into(e, col.span());
    diag[i] = col[i];
    e[i] = 0.0;
  }
  return diag;
}

Matrix SymmetricOperator::materialize() const {
  if (dense_) return *dense_;
  Matrix m(dim_, dim_);
  Vector e(dim_);
  Vector col(dim_);
  for (std::size_t j = 0; j < dim_; ++j) {
    e[j] = 1.0;
    apply_into(e, col.span());
    for (std::size_t i = 0; i < dim_; ++i) m(i, j) = col[i];
    e[j] = 0.0;
  }
  return m;
}

SymmetricOperator SymmetricOperator::shifted(double shift) const {
  if (shift == 0.0) return *this;
  if (dense_) {
    Matrix m = *dense_;
    for (std::size_t i = 0; i < dim_; ++i) m(i, i) += shift;
    return dense(std::move(m));
  }
  SymmetricOperator base = *this;
  return matrix_free(dim_, [base, shift](std::span<const double> v, std::span<double> out) {
    base.apply_into(v, out);
    kernels::active().axpy(shift, v.data(), out.data(), v.size());
  });
}

SymmetricOperator SymmetricOperator::scaled(double a) const {
  if (dense_) return dense(a * Matrix(*dense_));
  SymmetricOperator base = *this;
  return matrix_free(dim_, [base, a](std::span<const double> v, std::span<double> out) {
    base.apply_into(v, out);
    kernels::active().scal(a, out.data(), out.size());
  });
}

SymmetricOperator SymmetricOperator::minus(const SymmetricOperator& other) const {
  require_same_dim(dim_, other.dim_, "SymmetricOperator::minus");
  if (dense_ && other.dense_) return dense(*dense_ - *other.dense_);
  SymmetricOperator a = *this;
  SymmetricOperator b = other;
  return matrix_free(dim_, [a, b](std::span<const double> v, std::span<double> out) {
    a.apply_into(v, out);
    Vector tmp = b.apply(v);
    kernels::active().axpy(-1.0, tmp.data(), out.data(), out.size());
  });
}

}  // namespace vrcn
