// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"

namespace lkda::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(LKDA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* default_table() {
  if (const char* env = std::getenv("LKDA_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && avx2_table() != nullptr) return avx2_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{default_table()};
  return table;
}

}  // namespace

const KernelTable& scalar_table() { return scalar::kTable; }

const KernelTable* avx2_table() {
#if defined(LKDA_HAVE_AVX2)
  static const bool ok = cpu_has_avx2();
  return ok ? &avx2::kTable : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  if (name == "scalar") {
    current().store(&scalar_table());
    return true;
  }
  if (name == "avx2" && avx2_table() != nullptr) {
    current().store(avx2_table());
    return true;
  }
  return false;
}

std::vector<std::string_view> available() {
  std::vector<std::string_view> out{"scalar"};
  if (avx2_table() != nullptr) out.emplace_back("avx2");
  return out;
}

}  // namespace lkda::kernels
