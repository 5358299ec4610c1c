// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include <malloc.h>

#include <iostream>

#include "lkda/cli/commands.hpp"

int main(int argc, char** argv) {
  // Autodiff intermediates are a few MB each; keep them on the heap instead
  // of mapping and unmapping pages every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return lkda::cli::run(argc, argv, std::cout, std::cerr);
}
