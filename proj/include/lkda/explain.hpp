// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lkda/model.hpp"

namespace lkda::explain {

/// Maskable (non-context) nodes of one choice subgraph, most important first.
struct ImportanceRanking {
  std::vector<std::pair<std::uint32_t, double>> entries;

  std::vector<std::uint32_t> top(std::size_t k) const;
};

/// Score of node j: final-layer attention from j into the context node,
/// averaged over heads. Ties go to the lower node id.
ImportanceRanking rank_from_trace(const model::ForwardTrace& trace, std::size_t context_node);

/// One ranking per choice.
std::vector<ImportanceRanking> attention_importance(const model::FusionModelParams& params,
                                                    const synth::McqInstance& instance);

/// Rankings for a whole split, batched; results match the per-instance call.
std::vector<std::vector<ImportanceRanking>> attention_importance(
    const model::FusionModelParams& params, std::span<const synth::McqInstance> instances,
    std::size_t threads = 1);

enum class Policy : std::uint8_t { original, random, top };
std::string_view to_string(Policy p);
Policy parse_policy(std::string_view name);

struct CurvePoint {
  double sparsity = 0.0;
  double accuracy = 0.0;
  bool operator==(const CurvePoint&) const = default;
};

struct FidelitySparsityCurve {
  Policy policy = Policy::top;
  std::vector<CurvePoint> points;
  std::uint64_t seed = 0;
  std::string corpus_id;
  std::string model_id;
};

std::vector<double> default_sparsity_grid();

/// Rows masked at sparsity s out of `maskable` nodes: ceil(s * maskable).
std::size_t masked_count(double s, std::size_t maskable);

/// Feature masks for every choice of one instance. `rankings` is used by the
/// top and original policies; random draws derive from (seed, instance, choice,
/// grid index).
model::ChoiceMasks build_masks(const synth::McqInstance& instance,
                               std::span<const ImportanceRanking> rankings, Policy policy, double s,
                               std::uint64_t seed, std::size_t instance_index, std::size_t grid_index);

struct SweepOptions {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string corpus_id;
  std::string model_id;
};

/// Accuracy under increasing feature masking. For Policy::original pass the
/// baseline model: it is masked by its own top ranking. Throws ContractError
/// unless the grid is strictly increasing, within [0,1] and starts at 0.
FidelitySparsityCurve sweep(const model::FusionModelParams& params,
                            std::span<const synth::McqInstance> instances, Policy policy,
                            std::span<const double> grid, const SweepOptions& options = {});

/// |top-k ∩ path| / min(k, |path|); nullopt for an empty path.
std::optional<double> recovery_score(const ImportanceRanking& ranking,
                                     std::span<const std::uint32_t> planted_path, std::size_t k);

/// Mean and variance of recovery_score for a uniformly random ranking of
/// `maskable` nodes with `path` of them planted.
struct RecoveryBaseline {
  double mean = 0.0;
  double variance = 0.0;
};
RecoveryBaseline random_recovery(std::size_t maskable, std::size_t path, std::size_t k);

/// Trapezoidal area between the s = 0 accuracy level and the curve.
double auc_drop(const FidelitySparsityCurve& curve);

/// Columns: policy, sparsity, accuracy, seed, model_id.
std::string curve_csv(std::span<const FidelitySparsityCurve> curves);
std::vector<FidelitySparsityCurve> parse_curve_csv(const std::string& text);

/// Pointwise mean over curves that share policy and grid.
FidelitySparsityCurve average_curves(std::span<const FidelitySparsityCurve> curves);

}  // namespace lkda::explain
