// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lkda/kernels.hpp"

namespace lkda::kernels {
namespace scalar {
extern const KernelTable kTable;
}
#if defined(LKDA_HAVE_AVX2)
namespace avx2 {
extern const KernelTable kTable;
}
#endif
}  // namespace lkda::kernels
