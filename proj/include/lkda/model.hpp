// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lkda/random.hpp"
#include "lkda/synth.hpp"
#include "lkda/tensor.hpp"

namespace lkda::model {

struct ModelConfig {
  std::size_t d_model = 32;  // text width
  std::size_t d_graph = 32;  // D
  std::size_t gnn_layers = 3;
  std::size_t heads = 2;
  std::size_t n_relations = 6;  // knowledge-graph relations; inverse and self ids are added
  std::size_t vocab_size = 64;
  std::size_t d_node = 32;
  std::size_t max_positions = 16;
  std::string fusion = "concat_mlp";
  double dropout = 0.0;
  double detach_fill = 0.0;  // every entry of the fill vector

  void validate() const;
  /// Relation-embedding rows per layer: forward, inverse, and self loop.
  std::size_t relation_slots() const { return 2 * n_relations + 1; }
  bool operator==(const ModelConfig&) const = default;
};

/// Matches graph and vocabulary sizes to a generator config.
ModelConfig config_for(const synth::GenConfig& gen);

enum class ParamGroup : std::uint8_t { text, graph };

struct NamedParam {
  std::string name;
  ParamGroup group;
  ad::Tensor tensor;
};

struct Linear {
  ad::Tensor w;  // in x out
  ad::Tensor b;  // 1 x out
};

struct GnnLayer {
  Linear query, key, value;
  ad::Tensor rel_key;    // relation_slots x D
  ad::Tensor rel_value;  // relation_slots x D
  Linear mlp1, mlp2;     // message MLP f_n
};

/// All learnable weights. Tensors are shared handles: copying the struct
/// aliases the weights, clone() deep-copies them.
struct FusionModelParams {
  ModelConfig config;
  ad::Tensor token_embedding;     // vocab x d_model
  ad::Tensor position_embedding;  // max_positions x d_model
  Linear text_query, text_key, text_value, text_out;
  Linear node_in;   // d_node -> D
  Linear context_in;  // d_model -> D
  std::vector<GnnLayer> layers;
  Linear fuse1, fuse2;    // (d_model + D) -> D -> D
  Linear score1, score2;  // D -> D -> 1

  /// Deterministic initialization from `seed`.
  static FusionModelParams init(const ModelConfig& config, std::uint64_t seed);

  /// Canonical names in a fixed order; the order defines flat layouts.
  std::vector<NamedParam> named() const;
  FusionModelParams clone() const;
  std::size_t count() const;
  void zero_grad() const;
  bool all_finite() const;
};

struct ChoiceDistribution {
  std::vector<double> probabilities;
  std::size_t predicted_index = 0;

  /// Softmax of `scores` with the lowest-index argmax.
  static ChoiceDistribution from_scores(std::span<const double> scores);
};

/// Dense attention of one choice subgraph: alpha[layer][head][s * n + j] is
/// the weight of source s in the update of target j, zero without an edge.
struct ForwardTrace {
  std::size_t num_nodes = 0;
  std::vector<double> z;
  std::vector<std::vector<std::vector<double>>> alpha;
  std::vector<double> g;
  double score = 0.0;

  double at(std::size_t layer, std::size_t head, std::size_t s, std::size_t j) const {
    return alpha[layer][head][s * num_nodes + j];
  }
};

/// Node-row masks for every choice of one instance.
using ChoiceMasks = std::vector<std::vector<std::uint32_t>>;

struct ForwardOptions {
  bool detached = false;
  bool want_trace = false;
  /// Ablation: message MLP output forced to zero, leaving only residuals.
  bool zero_message_mlp = false;
  /// One entry per instance when set.
  std::span<const ChoiceMasks> masks = {};
  /// Dropout is active only when this is set and config.dropout > 0.
  Rng* dropout_rng = nullptr;
};

struct BatchForward {
  std::size_t instances = 0;
  std::size_t choices = 0;
  ad::Tensor scores;  // instances x choices
  std::vector<ForwardTrace> traces;  // instance-major, when requested
};

/// Scores every choice of every instance in one disjoint-union pass.
BatchForward forward(const FusionModelParams& params, std::span<const synth::McqInstance* const> batch,
                     const ForwardOptions& options = {});

/// Context embedding of one token sequence, 1 x d_model.
ad::Tensor encode_text(const FusionModelParams& params, std::span<const std::int32_t> tokens);

struct GraphEncoding {
  ad::Tensor nodes;  // num_nodes x D
  ForwardTrace trace;
};

/// `z` may be undefined when detached; the fill vector is used instead.
GraphEncoding encode_graph(const FusionModelParams& params, const synth::RelationalSubgraph& graph,
                           const ad::Tensor& z, bool detached, bool zero_message_mlp = false);

/// One-hidden-layer MLP over [z; g]; rows are independent.
ad::Tensor fuse(const FusionModelParams& params, const ad::Tensor& z, const ad::Tensor& g);

/// 1 x d_model detachment fill.
ad::Tensor detach_fill(const ModelConfig& config, std::size_t rows = 1);

struct Prediction {
  ChoiceDistribution distribution;
  std::vector<ForwardTrace> traces;
};

Prediction predict(const FusionModelParams& params, const synth::McqInstance& instance, bool detached);

/// Full pathway with the listed feature rows zeroed. Throws ContractError if a
/// mask touches the context node.
ChoiceDistribution predict_masked(const FusionModelParams& params, const synth::McqInstance& instance,
                                  const ChoiceMasks& masks);

/// Text of choice c: question tokens followed by the choice tokens.
std::vector<std::int32_t> choice_text(const synth::McqInstance& instance, std::size_t choice);

/// Throws InputError when the instance does not fit the model.
void check_instance(const ModelConfig& config, const synth::McqInstance& instance);

}  // namespace lkda::model
