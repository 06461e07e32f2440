#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels_impl.hpp"

namespace vrcn::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(VRCN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__)) && \
    (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* automatic_choice() {
  const char* env = std::getenv("VRCN_SIMD");
  if (env != nullptr) {
    const std::string want(env);
    if (want == "scalar") return &detail::kScalarTable;
    if (want == "avx2") {
      if (!supported(Isa::Avx2)) {
        throw std::runtime_error("VRCN_SIMD=avx2 requested but AVX2/FMA is unavailable");
      }
      return &table(Isa::Avx2);
    }
    if (want != "auto" && !want.empty()) {
      throw std::runtime_error("VRCN_SIMD must be one of scalar, avx2, auto; got '" + want + "'");
    }
  }
  if (supported(Isa::Avx2)) return &table(Isa::Avx2);
  return &detail::kScalarTable;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> ptr{automatic_choice()};
  return ptr;
}

}  // namespace

const KernelTable& scalar_table() { return detail::kScalarTable; }

bool supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
      return cpu_has_avx2();
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!supported(isa)) {
    throw std::runtime_error("kernel variant '" + std::string(isa_name(isa)) +
                             "' is not available on this build or CPU");
  }
#if defined(VRCN_HAVE_AVX2)
  if (isa == Isa::Avx2) return detail::kAvx2Table;
#endif
  return detail::kScalarTable;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) { current().store(&table(isa), std::memory_order_release); }

void select_auto() { current().store(automatic_choice(), std::memory_order_release); }

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace vrcn::kernels
