// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lkda/cli/config.hpp"

namespace lkda::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

struct GlobalOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::size_t threads = 1;
  bool quiet = false;
};

/// Config file (or defaults) with the --seed and --threads overrides applied.
RunConfig resolve_config(const GlobalOptions& g);

void cmd_gen(const GlobalOptions& g, std::ostream& out);

struct TrainArgs {
  std::filesystem::path corpus;
  std::optional<train::Mode> mode;
  std::optional<std::filesystem::path> resume;
  std::optional<std::filesystem::path> warm_start;
};
void cmd_train(const GlobalOptions& g, const TrainArgs& args, std::ostream& out);

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::string split = "dev";
};
void cmd_eval(const GlobalOptions& g, const EvalArgs& args, std::ostream& out);

struct SweepArgs {
  std::filesystem::path baseline;
  std::filesystem::path lkda;
  std::filesystem::path corpus;
  std::optional<std::string> split;
  std::vector<std::uint64_t> seeds;  // empty: sweep.seeds from the config
};
void cmd_sweep(const GlobalOptions& g, const SweepArgs& args, std::ostream& out);

/// Throws LoadError when no run directory has a readable manifest.
void cmd_report(const GlobalOptions& g, const std::vector<std::filesystem::path>& runs,
                std::ostream& out, std::ostream& err);

/// Full command-line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lkda::cli
