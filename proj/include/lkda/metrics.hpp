// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lkda/model.hpp"

namespace lkda::metrics {

struct EvalRecord {
  std::size_t gold_index = 0;
  model::ChoiceDistribution full;
  model::ChoiceDistribution detached;
};

struct MetricReport {
  double accuracy_full = 0.0;
  double accuracy_detached = 0.0;
  double f_kg = 0.0;
  double c_lk = 0.0;
  std::size_t n = 0;

  /// Flat JSON object, fixed key order, shortest round-trip numbers.
  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
  bool operator==(const MetricReport&) const = default;
};

/// Fraction of records whose full and detached argmax agree.
double fidelity_fkg(std::span<const EvalRecord> records);

/// lambda*KL(p||A) + (1-lambda)*KL(q||A), A = lambda*p + (1-lambda)*q, in nats.
double jsd(std::span<const double> p, std::span<const double> q, double lambda = 0.5);

double consistency_clk(std::span<const EvalRecord> records, double lambda = 0.5);

double sparsity(std::size_t masked_rows, std::size_t total_nodes);

/// Signed accuracy drop.
double delta_acc(double acc_original, double acc_perturbed);

double accuracy_full(std::span<const EvalRecord> records);
double accuracy_detached(std::span<const EvalRecord> records);

MetricReport make_report(std::span<const EvalRecord> records, double lambda = 0.5);

/// Full and detached predictions for every instance. Work is split across
/// `threads` workers; results do not depend on the split.
std::vector<EvalRecord> evaluate(const model::FusionModelParams& params,
                                 std::span<const synth::McqInstance> instances, std::size_t threads = 1,
                                 std::size_t batch_size = 64);

}  // namespace lkda::metrics
