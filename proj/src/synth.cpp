// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include "lkda/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <utility>

#include "lkda/errors.hpp"
#include "lkda/random.hpp"

namespace lkda::synth {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::context: return "context";
    case NodeKind::question_concept: return "question_concept";
    case NodeKind::answer_concept: return "answer_concept";
    case NodeKind::other: return "other";
  }
  return "other";
}

NodeKind parse_node_kind(std::string_view name) {
  if (name == "context") return NodeKind::context;
  if (name == "question_concept") return NodeKind::question_concept;
  if (name == "answer_concept") return NodeKind::answer_concept;
  if (name == "other") return NodeKind::other;
  throw InputError("unknown node kind '" + std::string(name) + "'");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  throw InputError("unknown split '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Invariants

std::size_t RelationalSubgraph::context_node() const {
  for (std::size_t i = 0; i < node_kinds.size(); ++i)
    if (node_kinds[i] == NodeKind::context) return i;
  throw InputError("subgraph has no context node");
}

void RelationalSubgraph::validate() const {
  if (num_nodes == 0) throw InputError("subgraph has no nodes");
  if (node_kinds.size() != num_nodes)
    throw InputError("node_kinds has " + std::to_string(node_kinds.size()) + " entries for " +
                     std::to_string(num_nodes) + " nodes");
  if (features.size() != num_nodes * d_node)
    throw InputError("feature matrix has " + std::to_string(features.size()) +
                     " values, expected " + std::to_string(num_nodes) + "x" +
                     std::to_string(d_node));
  const auto contexts = std::count(node_kinds.begin(), node_kinds.end(), NodeKind::context);
  if (contexts != 1)
    throw InputError("subgraph must have exactly one context node, found " +
                     std::to_string(contexts));
  std::vector<std::vector<std::uint32_t>> adj(num_nodes);
  for (const Edge& e : edges) {
    if (e.source >= num_nodes || e.target >= num_nodes)
      throw InputError("edge (" + std::to_string(e.source) + "," + std::to_string(e.target) +
                       ") has an endpoint outside " + std::to_string(num_nodes) + " nodes");
    if (e.relation >= relation_count)
      throw InputError("edge relation " + std::to_string(e.relation) +
                       " >= relation_count " + std::to_string(relation_count));
    adj[e.source].push_back(e.target);
    adj[e.target].push_back(e.source);
  }
  std::vector<char> seen(num_nodes, 0);
  std::vector<std::uint32_t> stack{static_cast<std::uint32_t>(context_node())};
  seen[stack.back()] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    for (auto v : adj[u])
      if (!seen[v]) seen[v] = 1, ++reached, stack.push_back(v);
  }
  if (reached != num_nodes)
    throw InputError("subgraph is not connected from its context node (" +
                     std::to_string(reached) + " of " + std::to_string(num_nodes) + " reached)");
  for (double v : features)
    if (!std::isfinite(v)) throw InputError("non-finite node feature");
}

void McqInstance::validate(std::size_t expected_choices) const {
  if (choices.size() != expected_choices || subgraphs.size() != expected_choices ||
      planted_path.size() != expected_choices)
    throw InputError("instance has " + std::to_string(choices.size()) + " choices, " +
                     std::to_string(subgraphs.size()) + " subgraphs and " +
                     std::to_string(planted_path.size()) + " path lists; expected " +
                     std::to_string(expected_choices));
  if (gold_index >= expected_choices)
    throw InputError("gold_index " + std::to_string(gold_index) + " out of range");
  if (question_tokens.empty()) throw InputError("empty question");
  for (std::size_t c = 0; c < expected_choices; ++c) {
    subgraphs[c].validate();
    for (auto node : planted_path[c])
      if (node >= subgraphs[c].num_nodes)
        throw InputError("planted path node " + std::to_string(node) + " out of range");
  }
}

void GenConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(n_train, "n_train");
  positive(n_dev, "n_dev");
  positive(n_test, "n_test");
  positive(n_choices, "n_choices");
  positive(vocab_size, "vocab_size");
  positive(min_nodes, "min_nodes");
  positive(d_node, "d_node");
  positive(path_length, "path_length");
  positive(n_question_concepts, "n_question_concepts");
  positive(question_length, "question_length");
  if (!(confounder_strength >= 0.0 && confounder_strength <= 1.0))
    throw ConfigError("confounder_strength must lie in [0,1]");
  if (!(distractor_edge_rate >= 0.0)) throw ConfigError("distractor_edge_rate must be >= 0");
  if (!(motif_base_rate >= 0.0 && motif_base_rate <= 1.0))
    throw ConfigError("motif_base_rate must lie in [0,1]");
  if (!(feature_noise >= 0.0)) throw ConfigError("feature_noise must be >= 0");
  if (max_nodes < min_nodes) throw ConfigError("max_nodes must be >= min_nodes");
  if (min_nodes < path_length + 2)
    throw ConfigError("node count range too small to host path_length " +
                      std::to_string(path_length) + ": min_nodes must be >= " +
                      std::to_string(path_length + 2));
  if (relation_count < 3)
    throw ConfigError("relation_count must be >= 3 (context, knowledge, motif)");
  if (n_choices < 2) throw ConfigError("n_choices must be >= 2");
  if (n_keys < n_choices) throw ConfigError("n_keys must be >= n_choices");
  const double codes = std::pow(static_cast<double>(relation_count - 2),
                                static_cast<double>(path_length));
  if (codes < static_cast<double>(n_keys))
    throw ConfigError("n_keys exceeds the number of distinct relation codes");
  if (n_question_concepts + std::max(n_choices, std::size_t{1}) > vocab_size)
    throw ConfigError("vocab_size too small for the concept inventory");
}

// ---------------------------------------------------------------------------
// World

std::int32_t World::decode(std::span<const std::uint32_t> relations) const {
  for (std::size_t k = 0; k < codes.size(); ++k)
    if (std::equal(codes[k].begin(), codes[k].end(), relations.begin(), relations.end()))
      return static_cast<std::int32_t>(k);
  return -1;
}

World make_world(const GenConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, {0x776f726cULL}));
  World w;
  std::vector<std::int32_t> tokens(config.vocab_size);
  std::iota(tokens.begin(), tokens.end(), 0);
  rng.shuffle(tokens);
  w.question_concepts.assign(tokens.begin(), tokens.begin() + config.n_question_concepts);
  w.other_concepts.assign(tokens.begin() + config.n_question_concepts, tokens.end());

  const std::size_t d = config.d_node;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  w.concept_features.resize(config.vocab_size * d);
  for (double& v : w.concept_features) v = sd * rng.normal();

  w.key_of_token.assign(config.vocab_size, -1);
  for (auto c : w.question_concepts)
    w.key_of_token[static_cast<std::size_t>(c)] = static_cast<std::int32_t>(rng.index(config.n_keys));

  const std::size_t base = config.knowledge_relations();
  std::size_t total = 1;
  for (std::size_t i = 0; i < config.path_length; ++i) total *= base;
  for (std::size_t code : rng.sample(total, config.n_keys)) {
    std::vector<std::uint32_t> rels(config.path_length);
    for (std::size_t i = config.path_length; i-- > 0;) {
      rels[i] = static_cast<std::uint32_t>(1 + code % base);
      code /= base;
    }
    w.codes.push_back(std::move(rels));
  }

  w.markers.resize(config.n_keys * d);
  for (std::size_t k = 0; k < config.n_keys; ++k) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = rng.normal();
      w.markers[k * d + j] = v;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d; ++j) w.markers[k * d + j] /= norm;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Instances

namespace {

double quantize(double v) { return std::round(v / kFeatureQuantum) * kFeatureQuantum; }

// One choice subgraph. Nodes are built in role order and then relabelled so
// that node ids carry no information about roles; the context node stays at 0.
struct ChoiceGraph {
  RelationalSubgraph graph;
  std::vector<std::uint32_t> path;  // question node, intermediates, answer node
};

ChoiceGraph build_choice_graph(const GenConfig& cfg, const World& world, Rng& rng,
                               std::int32_t question_concept, std::int32_t answer_concept,
                               std::size_t key, bool gold) {
  const std::size_t n = rng.range(cfg.min_nodes, cfg.max_nodes);
  const std::size_t L = cfg.path_length;
  const std::size_t d = cfg.d_node;
  // role order: 0 context, 1 question node, 2..L intermediates, L+1 answer, rest other
  const std::size_t answer_role = L + 1;
  const std::size_t first_other = L + 2;

  std::vector<std::int32_t> concept_of(n, -1);
  concept_of[1] = question_concept;
  concept_of[answer_role] = answer_concept;
  const auto& others = world.other_concepts;
  for (std::size_t r = 2; r < n; ++r)
    if (r != answer_role) concept_of[r] = others[rng.index(others.size())];

  std::vector<std::uint32_t> label(n);  // role -> node id
  {
    std::vector<std::uint32_t> rest(n - 1);
    std::iota(rest.begin(), rest.end(), 1u);
    rng.shuffle(rest);
    label[0] = 0;
    for (std::size_t r = 1; r < n; ++r) label[r] = rest[r - 1];
  }

  RelationalSubgraph g;
  g.num_nodes = n;
  g.relation_count = cfg.relation_count;
  g.d_node = d;
  g.node_kinds.assign(n, NodeKind::other);
  g.node_kinds[label[0]] = NodeKind::context;
  g.node_kinds[label[1]] = NodeKind::question_concept;
  g.node_kinds[label[answer_role]] = NodeKind::answer_concept;

  g.features.assign(n * d, 0.0);
  const double noise = cfg.feature_noise / std::sqrt(static_cast<double>(d));
  for (std::size_t r = 1; r < n; ++r) {
    double* row = g.features.data() + label[r] * d;
    const double* base = world.concept_features.data() + static_cast<std::size_t>(concept_of[r]) * d;
    const bool marked = r >= 2 && r <= answer_role;
    for (std::size_t j = 0; j < d; ++j) {
      double v = base[j] + noise * rng.normal();
      if (marked) v += cfg.marker_strength * world.markers[key * d + j];
      row[j] = quantize(v);
    }
  }

  auto add_edge = [&](std::size_t s_role, std::size_t t_role, std::uint32_t rel) {
    g.edges.push_back({label[s_role], label[t_role], rel});
  };
  for (std::size_t r = 1; r < n; ++r) add_edge(0, r, kContextRelation);
  const auto& code = world.codes[key];
  for (std::size_t i = 0; i < L; ++i) add_edge(1 + i, 2 + i, code[i]);

  const auto knowledge = [&] { return static_cast<std::uint32_t>(1 + rng.index(cfg.knowledge_relations())); };
  std::set<std::pair<std::size_t, std::size_t>> used;
  for (std::size_t i = 0; i < L; ++i) used.insert({1 + i, 2 + i});
  // Filler nodes hang off earlier non-context nodes. Only "other" nodes ever
  // receive filler edges, so the planted path stays the unique shortest
  // question-to-answer route.
  for (std::size_t r = first_other; r < n; ++r) {
    const std::size_t parent = 1 + rng.index(r - 1);
    add_edge(parent, r, knowledge());
    used.insert({parent, r});
  }
  const std::size_t n_others = n - first_other;
  const auto distractors =
      static_cast<std::size_t>(std::llround(cfg.distractor_edge_rate * static_cast<double>(n)));
  for (std::size_t i = 0; i < distractors && n_others > 0; ++i) {
    for (int attempt = 0; attempt < 8; ++attempt) {
      const std::size_t s = 1 + rng.index(n - 1);
      const std::size_t t = first_other + rng.index(n_others);
      if (s == t || used.count({s, t}) || used.count({t, s})) continue;
      used.insert({s, t});
      add_edge(s, t, knowledge());
      break;
    }
  }

  std::size_t triangles = rng.bernoulli(cfg.motif_base_rate) ? 1 : 0;
  const bool confounded = rng.bernoulli(cfg.confounder_strength);
  if (gold && confounded) triangles += cfg.motif_extra;
  if (n_others >= 3) {
    for (std::size_t t = 0; t < triangles; ++t) {
      const auto pick = rng.sample(n_others, 3);
      const std::uint32_t motif = cfg.motif_relation();
      add_edge(first_other + pick[0], first_other + pick[1], motif);
      add_edge(first_other + pick[1], first_other + pick[2], motif);
      add_edge(first_other + pick[2], first_other + pick[0], motif);
    }
  }

  ChoiceGraph out;
  out.graph = std::move(g);
  for (std::size_t r = 1; r <= answer_role; ++r) out.path.push_back(label[r]);
  return out;
}

std::uint64_t split_key(Split s) { return static_cast<std::uint64_t>(s) + 1; }

}  // namespace

McqInstance generate_instance(const GenConfig& cfg, const World& world, Split split,
                              std::size_t index) {
  Rng rng(derive_seed(cfg.seed, {split_key(split), index}));
  McqInstance inst;
  const auto cq = world.question_concepts[rng.index(world.question_concepts.size())];
  const auto gold_key = static_cast<std::size_t>(world.key_of_token[static_cast<std::size_t>(cq)]);

  std::vector<std::size_t> wrong_keys;
  for (std::size_t k = 0; k < cfg.n_keys; ++k)
    if (k != gold_key) wrong_keys.push_back(k);
  rng.shuffle(wrong_keys);

  inst.gold_index = rng.index(cfg.n_choices);
  const auto answer_idx = rng.sample(world.other_concepts.size(), cfg.n_choices);

  inst.question_tokens.reserve(cfg.question_length);
  for (std::size_t i = 0; i + 1 < cfg.question_length; ++i)
    inst.question_tokens.push_back(world.other_concepts[rng.index(world.other_concepts.size())]);
  const std::size_t pos = rng.index(cfg.question_length);
  inst.question_tokens.insert(inst.question_tokens.begin() + static_cast<std::ptrdiff_t>(pos), cq);

  std::size_t next_wrong = 0;
  for (std::size_t c = 0; c < cfg.n_choices; ++c) {
    const bool gold = c == inst.gold_index;
    const std::size_t key = gold ? gold_key : wrong_keys[next_wrong++];
    const std::int32_t answer = world.other_concepts[answer_idx[c]];
    ChoiceGraph cg = build_choice_graph(cfg, world, rng, cq, answer, key, gold);
    inst.choices.push_back({answer});
    inst.subgraphs.push_back(std::move(cg.graph));
    inst.planted_path.push_back(gold ? std::move(cg.path) : std::vector<std::uint32_t>{});
  }
  return inst;
}

const std::vector<McqInstance>& Corpus::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::dev: return dev;
    case Split::test: return test;
  }
  return train;
}

Corpus generate_corpus(const GenConfig& config) {
  const World world = make_world(config);
  Corpus corpus;
  corpus.config = config;
  auto fill = [&](std::vector<McqInstance>& out, Split s, std::size_t n) {
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(generate_instance(config, world, s, i));
  };
  fill(corpus.train, Split::train, config.n_train);
  fill(corpus.dev, Split::dev, config.n_dev);
  fill(corpus.test, Split::test, config.n_test);
  return corpus;
}

}  // namespace lkda::synth
