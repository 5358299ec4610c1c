// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include "lkda/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lkda/errors.hpp"

namespace lkda::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end)
    throw ConfigError("bad value '" + v + "' for key '" + key + "'");
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw ConfigError("empty list for key '" + key + "'");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>)
      out += fmt(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class M>
Field size_field(M member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            std::invoke(member, c) = parse_number<std::size_t>(k, v);
          },
          [member](const RunConfig& c) { return std::to_string(std::invoke(member, c)); }};
}

template <class M>
Field u64_field(M member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            std::invoke(member, c) = parse_number<std::uint64_t>(k, v);
          },
          [member](const RunConfig& c) { return std::to_string(std::invoke(member, c)); }};
}

template <class M>
Field double_field(M member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            std::invoke(member, c) = parse_number<double>(k, v);
          },
          [member](const RunConfig& c) { return fmt(std::invoke(member, c)); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    // gen
    t["gen.seed"] = u64_field([](auto& c) -> auto& { return c.gen.seed; });
    t["gen.n_train"] = size_field([](auto& c) -> auto& { return c.gen.n_train; });
    t["gen.n_dev"] = size_field([](auto& c) -> auto& { return c.gen.n_dev; });
    t["gen.n_test"] = size_field([](auto& c) -> auto& { return c.gen.n_test; });
    t["gen.n_choices"] = size_field([](auto& c) -> auto& { return c.gen.n_choices; });
    t["gen.vocab_size"] = size_field([](auto& c) -> auto& { return c.gen.vocab_size; });
    t["gen.min_nodes"] = size_field([](auto& c) -> auto& { return c.gen.min_nodes; });
    t["gen.max_nodes"] = size_field([](auto& c) -> auto& { return c.gen.max_nodes; });
    t["gen.relation_count"] = size_field([](auto& c) -> auto& { return c.gen.relation_count; });
    t["gen.d_node"] = size_field([](auto& c) -> auto& { return c.gen.d_node; });
    t["gen.path_length"] = size_field([](auto& c) -> auto& { return c.gen.path_length; });
    t["gen.confounder_strength"] = double_field([](auto& c) -> auto& { return c.gen.confounder_strength; });
    t["gen.distractor_edge_rate"] = double_field([](auto& c) -> auto& { return c.gen.distractor_edge_rate; });
    t["gen.n_question_concepts"] = size_field([](auto& c) -> auto& { return c.gen.n_question_concepts; });
    t["gen.n_keys"] = size_field([](auto& c) -> auto& { return c.gen.n_keys; });
    t["gen.question_length"] = size_field([](auto& c) -> auto& { return c.gen.question_length; });
    t["gen.marker_strength"] = double_field([](auto& c) -> auto& { return c.gen.marker_strength; });
    t["gen.feature_noise"] = double_field([](auto& c) -> auto& { return c.gen.feature_noise; });
    t["gen.motif_base_rate"] = double_field([](auto& c) -> auto& { return c.gen.motif_base_rate; });
    t["gen.motif_extra"] = size_field([](auto& c) -> auto& { return c.gen.motif_extra; });
    // model
    t["model.d_model"] = size_field([](auto& c) -> auto& { return c.model.d_model; });
    t["model.d_graph"] = size_field([](auto& c) -> auto& { return c.model.d_graph; });
    t["model.gnn_layers"] = size_field([](auto& c) -> auto& { return c.model.gnn_layers; });
    t["model.heads"] = size_field([](auto& c) -> auto& { return c.model.heads; });
    t["model.max_positions"] = size_field([](auto& c) -> auto& { return c.model.max_positions; });
    t["model.dropout"] = double_field([](auto& c) -> auto& { return c.model.dropout; });
    t["model.detach_fill"] = double_field([](auto& c) -> auto& { return c.model.detach_fill; });
    t["model.fusion"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.model.fusion = v; },
                         [](const RunConfig& c) { return c.model.fusion; }};
    // train
    t["train.mode"] = {[](RunConfig& c, const std::string&, const std::string& v) {
                         c.train.mode = train::parse_mode(v);
                       },
                       [](const RunConfig& c) { return std::string(train::to_string(c.train.mode)); }};
    t["train.epochs"] = size_field([](auto& c) -> auto& { return c.train.epochs; });
    t["train.batch_size"] = size_field([](auto& c) -> auto& { return c.train.batch_size; });
    t["train.lr_text"] = double_field([](auto& c) -> auto& { return c.train.lr_text; });
    t["train.lr_graph"] = double_field([](auto& c) -> auto& { return c.train.lr_graph; });
    t["train.lambda_align"] = double_field([](auto& c) -> auto& { return c.train.lambda_align; });
    t["train.jsd_lambda"] = double_field([](auto& c) -> auto& { return c.train.jsd_lambda; });
    t["train.grad_clip_norm"] = double_field([](auto& c) -> auto& { return c.train.grad_clip_norm; });
    t["train.seed"] = u64_field([](auto& c) -> auto& { return c.train.seed; });
    t["train.eval_every"] = size_field([](auto& c) -> auto& { return c.train.eval_every; });
    t["train.beta1"] = double_field([](auto& c) -> auto& { return c.train.beta1; });
    t["train.beta2"] = double_field([](auto& c) -> auto& { return c.train.beta2; });
    t["train.adam_eps"] = double_field([](auto& c) -> auto& { return c.train.adam_eps; });
    t["train.stop_gradient"] = {[](RunConfig& c, const std::string&, const std::string& v) {
                                  c.train.stop_gradient = train::parse_stop_gradient(v);
                                },
                                [](const RunConfig& c) {
                                  return std::string(train::to_string(c.train.stop_gradient));
                                }};
    // sweep
    t["sweep.grid"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                         c.sweep.grid = parse_list<double>(k, v);
                       },
                       [](const RunConfig& c) { return fmt_list(c.sweep.grid); }};
    t["sweep.seeds"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                          c.sweep.seeds = parse_list<std::uint64_t>(k, v);
                        },
                        [](const RunConfig& c) { return fmt_list(c.sweep.seeds); }};
    t["sweep.split"] = {[](RunConfig& c, const std::string&, const std::string& v) {
                          (void)synth::parse_split(v);
                          c.sweep.split = v;
                        },
                        [](const RunConfig& c) { return c.sweep.split; }};
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  gen.validate();
  model::ModelConfig m = model;
  m.vocab_size = gen.vocab_size;
  m.n_relations = gen.relation_count;
  m.d_node = gen.d_node;
  m.validate();
  train.validate();
  if (sweep.grid.empty() || sweep.grid.front() != 0.0) throw ConfigError("sweep.grid must start at 0");
  for (std::size_t i = 1; i < sweep.grid.size(); ++i)
    if (!(sweep.grid[i] > sweep.grid[i - 1]) || sweep.grid[i] > 1.0)
      throw ConfigError("sweep.grid must increase strictly within [0,1]");
  if (sweep.seeds.empty()) throw ConfigError("sweep.seeds must list at least one seed");
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("missing key before '='", lineno);
    if (value.empty()) throw ParseError("missing value for '" + key + "'", lineno);
    const auto& table = fields();
    const auto it = table.find(key);
    if (it == table.end())
      throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(lineno) + ")");
    if (auto [pos, fresh] = seen.emplace(key, lineno); !fresh)
      throw ConfigError("config key '" + key + "' repeated on line " + std::to_string(lineno));
    it->second.set(c, key, value);
  }
  c.model.vocab_size = c.gen.vocab_size;
  c.model.n_relations = c.gen.relation_count;
  c.model.d_node = c.gen.d_node;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace lkda::cli
