#pragma once

// Dense double-precision inner loops. Every routine has a scalar reference
// implementation and, where the build and the CPU allow it, an AVX2/FMA
// variant. The active table is chosen once at startup (overridable with the
// VRCN_SIMD environment variable or select()) and all callers go through it.
//
// Reductions inside a table use a fixed order, so results are bitwise
// reproducible for a given table. Scalar and AVX2 tables agree to rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace vrcn::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  const char* name;

  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // x *= a
  void (*scal)(double a, double* x, std::size_t n);
  // y = A x, A row-major rows x cols
  void (*gemv)(const double* a, std::size_t rows, std::size_t cols,
               const double* x, double* y);
  // A += alpha * x x^T, A row-major d x d (full storage)
  void (*syr)(double alpha, const double* x, double* a, std::size_t d);
  // A += alpha * (x y^T + y x^T), A row-major d x d (full storage)
  void (*syr2)(double alpha, const double* x, const double* y, double* a,
               std::size_t d);
};

const KernelTable& scalar_table();
// Throws std::runtime_error if the variant was not compiled in or the CPU
// lacks the instructions.
const KernelTable& table(Isa isa);
bool supported(Isa isa);

// The table every vrcn routine uses.
const KernelTable& active();
void select(Isa isa);
// Restores the automatic choice (best supported, or VRCN_SIMD override).
void select_auto();

std::string_view isa_name(Isa isa);

}  // namespace vrcn::kernels
