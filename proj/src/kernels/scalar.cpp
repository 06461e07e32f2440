#include "kernels_impl.hpp"

namespace vrcn::kernels::detail {

namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scal_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void gemv_scalar(const double* a, std::size_t rows, std::size_t cols,
                 const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(a + r * cols, x, cols);
}

void syr_scalar(double alpha, const double* x, double* a, std::size_t d) {
  for (std::size_t r = 0; r < d; ++r) {
    const double s = alpha * x[r];
    double* row = a + r * d;
    for (std::size_t c = 0; c < d; ++c) row[c] += s * x[c];
  }
}

void syr2_scalar(double alpha, const double* x, const double* y, double* a,
                 std::size_t d) {
  for (std::size_t r = 0; r < d; ++r) {
    const double sx = alpha * x[r];
    const double sy = alpha * y[r];
    double* row = a + r * d;
    for (std::size_t c = 0; c < d; ++c) row[c] += sx * y[c] + sy * x[c];
  }
}

}  // namespace

const KernelTable kScalarTable{Isa::Scalar, "scalar",   dot_scalar, axpy_scalar,
                               scal_scalar, gemv_scalar, syr_scalar, syr2_scalar};

}  // namespace vrcn::kernels::detail
