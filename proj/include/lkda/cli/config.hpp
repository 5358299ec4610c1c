// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lkda/model.hpp"
#include "lkda/synth.hpp"
#include "lkda/training.hpp"

namespace lkda::cli {

struct SweepConfig {
  std::vector<double> grid = {0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string split = "test";
  bool operator==(const SweepConfig&) const = default;
};

/// Resolved settings of every command.
///
/// Text format, one setting per line:
///
///     # comment
///     gen.n_train = 2000
///     train.mode  = lkda
///     sweep.grid  = 0, 0.1, 0.5, 1
///
/// Sections are gen., model., train. and sweep.; unknown keys are rejected.
/// model.vocab_size, model.n_relations and model.d_node always follow the
/// corpus and cannot be set.
struct RunConfig {
  synth::GenConfig gen;
  model::ModelConfig model;
  train::TrainConfig train;
  SweepConfig sweep;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Throws ParseError (with line) on syntax errors and ConfigError naming the
/// key on unknown keys or bad values.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& config);

}  // namespace lkda::cli
