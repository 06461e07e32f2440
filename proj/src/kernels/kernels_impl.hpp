#pragma once

#include "vrcn/kernels.hpp"

namespace vrcn::kernels::detail {

extern const KernelTable kScalarTable;

#if defined(VRCN_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

}  // namespace vrcn::kernels::detail
