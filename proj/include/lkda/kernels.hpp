// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace lkda::kernels {

// Dense double-precision inner loops used by the autodiff engine.
//
// Every variant vectorizes along the contiguous output dimension only, so each
// output element sees the same sequence of additions and multiplications as
// the scalar reference. Variants are therefore bit-identical, and the choice
// of kernel never changes a training run. The translation units are built with
// -ffp-contract=off to keep that true.
struct KernelTable {
  const char* name;

  // c[m x n] (+)= a[m x k] * b[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  // c[k x n] (+)= a[m x k]^T * b[m x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = x + y
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  // out = x * y
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  // gx += gy * y   (product-rule accumulation)
  void (*mul_acc)(const double* gy, const double* y, double* gx, std::size_t n);
  // out = alpha * x
  void (*scale)(double alpha, const double* x, double* out, std::size_t n);
  // out = max(x, 0)
  void (*relu)(const double* x, double* out, std::size_t n);
  // gx += x > 0 ? gy : 0
  void (*relu_backward)(const double* x, const double* gy, double* gx, std::size_t n);
};

const KernelTable& scalar_table();

/// AVX2 table, or nullptr when not compiled in or the CPU lacks AVX2.
const KernelTable* avx2_table();

/// Kernel table used by tensor ops. Defaults to the widest supported variant;
/// the LKDA_KERNELS environment variable ("scalar" or "avx2") overrides.
const KernelTable& active();

/// Forces a variant by name. Returns false if it is unavailable.
bool select(std::string_view name);

/// Names of all variants usable on this machine.
std::vector<std::string_view> available();

}  // namespace lkda::kernels
