// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lkda::synth {

enum class NodeKind : std::uint8_t { context, question_concept, answer_concept, other };

std::string_view to_string(NodeKind kind);
NodeKind parse_node_kind(std::string_view name);

struct Edge {
  std::uint32_t source = 0;
  std::uint32_t target = 0;
  std::uint32_t relation = 0;
  bool operator==(const Edge&) const = default;
};

/// Multi-relational grounded subgraph with a node feature matrix.
///
/// Edges are stored once, directed source -> target. Exactly one node is the
/// context node; every node is reachable from it ignoring direction.
struct RelationalSubgraph {
  std::size_t num_nodes = 0;
  std::vector<NodeKind> node_kinds;
  std::vector<Edge> edges;
  std::size_t relation_count = 0;
  std::size_t d_node = 0;
  std::vector<double> features;  // num_nodes x d_node, row-major

  std::span<const double> feature_row(std::size_t node) const {
    return {features.data() + node * d_node, d_node};
  }
  std::size_t context_node() const;
  /// Throws InputError describing the first violated invariant.
  void validate() const;

  bool operator==(const RelationalSubgraph&) const = default;
};

struct McqInstance {
  std::vector<std::int32_t> question_tokens;
  std::vector<std::vector<std::int32_t>> choices;
  std::vector<RelationalSubgraph> subgraphs;
  std::size_t gold_index = 0;
  /// Per choice; empty for choices without a causal path.
  std::vector<std::vector<std::uint32_t>> planted_path;

  std::size_t num_choices() const { return choices.size(); }
  void validate(std::size_t expected_choices) const;

  bool operator==(const McqInstance&) const = default;
};

/// Generator settings. Relation ids follow a fixed convention: 0 links the
/// context node, relation_count - 1 is the confounding motif relation, and
/// the ids in between are knowledge relations used by paths and filler edges.
struct GenConfig {
  std::uint64_t seed = 42;
  std::size_t n_train = 2000;
  std::size_t n_dev = 400;
  std::size_t n_test = 400;
  std::size_t n_choices = 4;
  std::size_t vocab_size = 64;
  std::size_t min_nodes = 8;
  std::size_t max_nodes = 24;
  std::size_t relation_count = 6;
  std::size_t d_node = 32;
  std::size_t path_length = 2;
  double confounder_strength = 0.0;  // beta
  double distractor_edge_rate = 0.15;
  // Finer knobs of the task world.
  std::size_t n_question_concepts = 16;
  std::size_t n_keys = 8;
  std::size_t question_length = 6;
  double marker_strength = 1.0;
  double feature_noise = 0.3;
  double motif_base_rate = 0.5;
  std::size_t motif_extra = 2;  // triangles added to the gold graph under the confounder

  /// Throws ConfigError naming the offending field.
  void validate() const;
  std::uint32_t motif_relation() const { return static_cast<std::uint32_t>(relation_count - 1); }
  std::size_t knowledge_relations() const { return relation_count - 2; }

  bool operator==(const GenConfig&) const = default;
};

inline constexpr std::uint32_t kContextRelation = 0;
inline constexpr double kFeatureQuantum = 1e-4;

/// Latent world shared by all splits of one seed: concept features, the key
/// each question concept asks for, the relation code of each key, and the
/// feature marker carried by path nodes of that key.
struct World {
  std::vector<std::int32_t> question_concepts;
  std::vector<std::int32_t> other_concepts;
  std::vector<double> concept_features;    // vocab_size x d_node
  std::vector<std::int32_t> key_of_token;  // -1 for non-question tokens
  std::vector<std::vector<std::uint32_t>> codes;  // n_keys x path_length
  std::vector<double> markers;                     // n_keys x d_node

  /// Key whose relation code equals `relations`, or -1.
  std::int32_t decode(std::span<const std::uint32_t> relations) const;
};

World make_world(const GenConfig& config);

enum class Split : std::uint8_t { train, dev, test };
std::string_view to_string(Split split);
Split parse_split(std::string_view name);

McqInstance generate_instance(const GenConfig& config, const World& world, Split split,
                              std::size_t index);

struct Corpus {
  GenConfig config;
  std::vector<McqInstance> train;
  std::vector<McqInstance> dev;
  std::vector<McqInstance> test;

  const std::vector<McqInstance>& split(Split s) const;
  bool operator==(const Corpus&) const = default;
};

Corpus generate_corpus(const GenConfig& config);

// ---------------------------------------------------------------------------
// JSON Lines storage. Line 1 is a header
//   {"format":"lkda-corpus","schema_version":1,"split":..,"count":N,"config":{..}}
// followed by one instance object per line.

inline constexpr int kCorpusSchemaVersion = 1;

struct SplitFile {
  GenConfig config;
  Split split = Split::train;
  std::vector<McqInstance> instances;
};

void save_split(const std::filesystem::path& path, const GenConfig& config, Split split,
                std::span<const McqInstance> instances);
/// Throws ParseError (with line number) or VersionError; never returns a
/// partial result.
SplitFile load_split(const std::filesystem::path& path);

/// Writes dir/{train,dev,test}.jsonl.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

std::filesystem::path split_path(const std::filesystem::path& dir, Split split);

}  // namespace lkda::synth
