// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include "lkda/errors.hpp"
#include "lkda/json_codec.hpp"
#include "lkda/synth.hpp"

namespace lkda::synth {

using nlohmann::json;

namespace {
constexpr const char* kFormat = "lkda-corpus";
}

void to_json(json& j, const GenConfig& c) {
  j = json{{"seed", c.seed},
           {"n_train", c.n_train},
           {"n_dev", c.n_dev},
           {"n_test", c.n_test},
           {"n_choices", c.n_choices},
           {"vocab_size", c.vocab_size},
           {"min_nodes", c.min_nodes},
           {"max_nodes", c.max_nodes},
           {"relation_count", c.relation_count},
           {"d_node", c.d_node},
           {"path_length", c.path_length},
           {"confounder_strength", c.confounder_strength},
           {"distractor_edge_rate", c.distractor_edge_rate},
           {"n_question_concepts", c.n_question_concepts},
           {"n_keys", c.n_keys},
           {"question_length", c.question_length},
           {"marker_strength", c.marker_strength},
           {"feature_noise", c.feature_noise},
           {"motif_base_rate", c.motif_base_rate},
           {"motif_extra", c.motif_extra}};
}

void from_json(const json& j, GenConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end()) it->get_to(field);
  };
  get("seed", c.seed);
  get("n_train", c.n_train);
  get("n_dev", c.n_dev);
  get("n_test", c.n_test);
  get("n_choices", c.n_choices);
  get("vocab_size", c.vocab_size);
  get("min_nodes", c.min_nodes);
  get("max_nodes", c.max_nodes);
  get("relation_count", c.relation_count);
  get("d_node", c.d_node);
  get("path_length", c.path_length);
  get("confounder_strength", c.confounder_strength);
  get("distractor_edge_rate", c.distractor_edge_rate);
  get("n_question_concepts", c.n_question_concepts);
  get("n_keys", c.n_keys);
  get("question_length", c.question_length);
  get("marker_strength", c.marker_strength);
  get("feature_noise", c.feature_noise);
  get("motif_base_rate", c.motif_base_rate);
  get("motif_extra", c.motif_extra);
}

void to_json(json& j, const McqInstance& inst) {
  json graphs = json::array();
  for (const auto& g : inst.subgraphs) {
    json kinds = json::array();
    for (auto k : g.node_kinds) kinds.push_back(std::string(to_string(k)));
    json edges = json::array();
    for (const auto& e : g.edges) edges.push_back({e.source, e.target, e.relation});
    graphs.push_back({{"num_nodes", g.num_nodes},
                      {"node_kinds", std::move(kinds)},
                      {"edges", std::move(edges)},
                      {"relation_count", g.relation_count},
                      {"d_node", g.d_node},
                      {"features", g.features}});
  }
  j = json{{"question_tokens", inst.question_tokens},
           {"choices", inst.choices},
           {"gold_index", inst.gold_index},
           {"planted_path", inst.planted_path},
           {"subgraphs", std::move(graphs)}};
}

void from_json(const json& j, McqInstance& inst) {
  j.at("question_tokens").get_to(inst.question_tokens);
  j.at("choices").get_to(inst.choices);
  j.at("gold_index").get_to(inst.gold_index);
  j.at("planted_path").get_to(inst.planted_path);
  inst.subgraphs.clear();
  for (const auto& jg : j.at("subgraphs")) {
    RelationalSubgraph g;
    jg.at("num_nodes").get_to(g.num_nodes);
    for (const auto& k : jg.at("node_kinds")) g.node_kinds.push_back(parse_node_kind(k.get<std::string>()));
    for (const auto& e : jg.at("edges")) {
      if (!e.is_array() || e.size() != 3) throw InputError("edge must be [source, target, relation]");
      g.edges.push_back({e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>(), e[2].get<std::uint32_t>()});
    }
    jg.at("relation_count").get_to(g.relation_count);
    jg.at("d_node").get_to(g.d_node);
    jg.at("features").get_to(g.features);
    inst.subgraphs.push_back(std::move(g));
  }
}

std::filesystem::path split_path(const std::filesystem::path& dir, Split split) {
  return dir / (std::string(to_string(split)) + ".jsonl");
}

void save_split(const std::filesystem::path& path, const GenConfig& config, Split split,
                std::span<const McqInstance> instances) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  json header{{"format", kFormat},
              {"schema_version", kCorpusSchemaVersion},
              {"split", to_string(split)},
              {"count", instances.size()},
              {"config", config}};
  out << header.dump() << '\n';
  for (const auto& inst : instances) out << json(inst).dump() << '\n';
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

SplitFile load_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  SplitFile file;
  std::string line;
  std::size_t lineno = 0;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    ++lineno;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    try {
      if (lineno == 1) {
        if (j.value("format", std::string()) != kFormat)
          throw ParseError("not an lkda corpus file", lineno);
        const int version = j.at("schema_version").get<int>();
        if (version != kCorpusSchemaVersion)
          throw VersionError(path.string() + ": schema_version " + std::to_string(version) +
                             ", this build reads " + std::to_string(kCorpusSchemaVersion));
        j.at("config").get_to(file.config);
        file.split = parse_split(j.at("split").get<std::string>());
        j.at("count").get_to(expected);
        file.instances.reserve(expected);
        continue;
      }
      McqInstance inst = j.get<McqInstance>();
      inst.validate(file.config.n_choices);
      file.instances.push_back(std::move(inst));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), lineno);
    } catch (const InputError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  if (lineno == 0) throw ParseError("empty corpus file", 0);
  if (file.instances.size() != expected)
    throw ParseError("header announces " + std::to_string(expected) + " instances, found " +
                         std::to_string(file.instances.size()),
                     lineno);
  return file;
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  for (Split s : {Split::train, Split::dev, Split::test})
    save_split(split_path(dir, s), corpus.config, s, corpus.split(s));
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  bool first = true;
  for (Split s : {Split::train, Split::dev, Split::test}) {
    SplitFile f = load_split(split_path(dir, s));
    if (f.split != s)
      throw LoadError(split_path(dir, s).string() + " holds split '" +
                      std::string(to_string(f.split)) + "'");
    if (first) {
      corpus.config = f.config;
      first = false;
    } else if (!(f.config == corpus.config)) {
      throw LoadError("split files in " + dir.string() + " were generated with different configs");
    }
    switch (s) {
      case Split::train: corpus.train = std::move(f.instances); break;
      case Split::dev: corpus.dev = std::move(f.instances); break;
      case Split::test: corpus.test = std::move(f.instances); break;
    }
  }
  return corpus;
}

}  // namespace lkda::synth
