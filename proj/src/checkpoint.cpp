// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <map>

#include "lkda/errors.hpp"
#include "lkda/json_codec.hpp"
#include "lkda/training.hpp"

namespace lkda::model {

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},       {"d_graph", c.d_graph},
                     {"gnn_layers", c.gnn_layers}, {"heads", c.heads},
                     {"n_relations", c.n_relations}, {"vocab_size", c.vocab_size},
                     {"d_node", c.d_node},         {"max_positions", c.max_positions},
                     {"fusion", c.fusion},         {"dropout", c.dropout},
                     {"detach_fill", c.detach_fill}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("d_model").get_to(c.d_model);
  j.at("d_graph").get_to(c.d_graph);
  j.at("gnn_layers").get_to(c.gnn_layers);
  j.at("heads").get_to(c.heads);
  j.at("n_relations").get_to(c.n_relations);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("d_node").get_to(c.d_node);
  j.at("max_positions").get_to(c.max_positions);
  j.at("fusion").get_to(c.fusion);
  j.at("dropout").get_to(c.dropout);
  j.at("detach_fill").get_to(c.detach_fill);
}

}  // namespace lkda::model

namespace lkda::train {

using nlohmann::json;

void to_json(json& j, const TrainConfig& c) {
  j = json{{"mode", to_string(c.mode)},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"lr_text", c.lr_text},
           {"lr_graph", c.lr_graph},
           {"lambda_align", c.lambda_align},
           {"jsd_lambda", c.jsd_lambda},
           {"grad_clip_norm", c.grad_clip_norm},
           {"seed", c.seed},
           {"eval_every", c.eval_every},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_eps", c.adam_eps},
           {"stop_gradient", to_string(c.stop_gradient)},
           {"threads", c.threads}};
}

void from_json(const json& j, TrainConfig& c) {
  c.mode = parse_mode(j.at("mode").get<std::string>());
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("lr_text").get_to(c.lr_text);
  j.at("lr_graph").get_to(c.lr_graph);
  j.at("lambda_align").get_to(c.lambda_align);
  j.at("jsd_lambda").get_to(c.jsd_lambda);
  j.at("grad_clip_norm").get_to(c.grad_clip_norm);
  j.at("seed").get_to(c.seed);
  j.at("eval_every").get_to(c.eval_every);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("adam_eps").get_to(c.adam_eps);
  c.stop_gradient = parse_stop_gradient(j.at("stop_gradient").get<std::string>());
  j.at("threads").get_to(c.threads);
}

namespace {

constexpr const char* kFormat = "lkda-checkpoint";

// JSON has no NaN; non-evaluated log cells are stored as null.
json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double read_number(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json params_json(const model::FusionModelParams& p) {
  json out = json::object();
  for (const auto& np : p.named()) {
    const auto& t = np.tensor;
    out[np.name] = {{"shape", {t.rows(), t.cols()}},
                    {"values", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  return out;
}

model::FusionModelParams params_from_json(const json& j, const model::ModelConfig& config) {
  auto p = model::FusionModelParams::init(config, 0);
  auto named = p.named();
  if (j.size() != named.size())
    throw LoadError("checkpoint holds " + std::to_string(j.size()) + " tensors, model expects " +
                    std::to_string(named.size()));
  for (auto& np : named) {
    auto it = j.find(np.name);
    if (it == j.end()) throw LoadError("checkpoint lacks tensor '" + np.name + "'");
    const auto shape = it->at("shape").get<std::vector<std::size_t>>();
    auto values = it->at("values").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != np.tensor.rows() || shape[1] != np.tensor.cols() ||
        values.size() != np.tensor.size())
      throw LoadError("tensor '" + np.name + "' has the wrong shape");
    for (double v : values)
      if (!std::isfinite(v)) throw LoadError("tensor '" + np.name + "' holds a non-finite value");
    auto dst = np.tensor.mutable_values();
    std::copy(values.begin(), values.end(), dst.begin());
  }
  return p;
}

json slots_json(const Adam& adam, const model::FusionModelParams& p) {
  json out = json::object();
  const auto named = p.named();
  for (std::size_t i = 0; i < named.size(); ++i)
    out[named[i].name] = {{"m", adam.slots()[i].m}, {"v", adam.slots()[i].v}};
  return out;
}

json state_json(const TrainState& st) {
  json log = json::array();
  for (const auto& e : st.log)
    log.push_back({{"epoch", e.epoch},
                   {"ce_loss", number_or_null(e.ce_loss)},
                   {"align_loss", number_or_null(e.align_loss)},
                   {"train_acc", number_or_null(e.train_acc)},
                   {"dev_acc", number_or_null(e.dev_acc)},
                   {"dev_fkg", number_or_null(e.dev_fkg)},
                   {"dev_clk", number_or_null(e.dev_clk)}});
  return {{"epochs_done", st.epochs_done},
          {"adam_steps", st.optimizer.steps()},
          {"adam", slots_json(st.optimizer, st.params)},
          {"log", std::move(log)},
          {"best", params_json(st.best)},
          {"best_dev_acc", st.best_dev_acc},
          {"best_epoch", st.best_epoch}};
}

TrainState state_from_json(const json& j, const model::FusionModelParams& current,
                           const model::ModelConfig& config) {
  TrainState st;
  st.params = current;
  j.at("epochs_done").get_to(st.epochs_done);
  std::vector<Adam::Slot> slots;
  for (const auto& np : current.named()) {
    const auto& s = j.at("adam").at(np.name);
    Adam::Slot slot{s.at("m").get<std::vector<double>>(), s.at("v").get<std::vector<double>>()};
    if (slot.m.size() != np.tensor.size() || slot.v.size() != np.tensor.size())
      throw LoadError("optimizer moments for '" + np.name + "' have the wrong size");
    slots.push_back(std::move(slot));
  }
  st.optimizer.slots() = std::move(slots);
  st.optimizer.set_steps(j.at("adam_steps").get<std::uint64_t>());
  for (const auto& e : j.at("log")) {
    EpochLog l;
    e.at("epoch").get_to(l.epoch);
    l.ce_loss = read_number(e.at("ce_loss"));
    l.align_loss = read_number(e.at("align_loss"));
    l.train_acc = read_number(e.at("train_acc"));
    l.dev_acc = read_number(e.at("dev_acc"));
    l.dev_fkg = read_number(e.at("dev_fkg"));
    l.dev_clk = read_number(e.at("dev_clk"));
    st.log.push_back(l);
  }
  st.best = params_from_json(j.at("best"), config);
  j.at("best_dev_acc").get_to(st.best_dev_acc);
  j.at("best_epoch").get_to(st.best_epoch);
  return st;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const model::FusionModelParams& params,
                     const std::optional<TrainConfig>& config, const TrainState* state) {
  json doc{{"format", kFormat},
           {"version", kCheckpointVersion},
           {"model_config", params.config},
           {"params", params_json(params)}};
  if (config) doc["train_config"] = *config;
  if (state) doc["train_state"] = state_json(*state);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << doc.dump() << '\n';
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw LoadError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("format", std::string()) != kFormat)
      throw LoadError(path.string() + " is not an lkda checkpoint");
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw VersionError("checkpoint version " + std::to_string(version) + ", this build reads " +
                         std::to_string(kCheckpointVersion));
    const auto config = doc.at("model_config").get<model::ModelConfig>();
    config.validate();
    Checkpoint ck;
    ck.params = params_from_json(doc.at("params"), config);
    if (doc.contains("train_config")) ck.train_config = doc.at("train_config").get<TrainConfig>();
    if (doc.contains("train_state")) ck.state = state_from_json(doc.at("train_state"), ck.params, config);
    return ck;
  } catch (const json::exception& e) {
    throw LoadError("corrupt checkpoint " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError("checkpoint " + path.string() + " has an invalid model config: " + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const model::ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.params.config == expected))
    throw LoadError("checkpoint " + path.string() + " was trained with a different model config");
  return ck;
}

}  // namespace lkda::train
