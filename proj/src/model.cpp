// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include "lkda/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lkda/errors.hpp"

namespace lkda::model {

using ad::Index;
using ad::Shape;
using ad::Tensor;
using synth::McqInstance;
using synth::RelationalSubgraph;

void ModelConfig::validate() const {
  if (d_model == 0 || d_graph == 0 || vocab_size == 0 || d_node == 0 || max_positions == 0)
    throw ConfigError("model dimensions must be positive");
  if (gnn_layers < 1) throw ConfigError("gnn_layers must be >= 1");
  if (heads == 0 || d_graph % heads != 0)
    throw ConfigError("d_graph " + std::to_string(d_graph) + " is not divisible by heads " +
                      std::to_string(heads));
  if (n_relations == 0) throw ConfigError("n_relations must be positive");
  if (fusion != "concat_mlp") throw ConfigError("unknown fusion kind '" + fusion + "'");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (!std::isfinite(detach_fill)) throw ConfigError("detach_fill must be finite");
}

ModelConfig config_for(const synth::GenConfig& gen) {
  ModelConfig c;
  c.vocab_size = gen.vocab_size;
  c.n_relations = gen.relation_count;
  c.d_node = gen.d_node;
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

Linear make_linear(Rng& rng, std::size_t in, std::size_t out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out), b(out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  for (double& v : b) v = rng.uniform(-bound, bound);
  return {Tensor::parameter({in, out}, std::move(w)), Tensor::parameter({1, out}, std::move(b))};
}

Tensor make_table(Rng& rng, std::size_t rows, std::size_t cols, double sd) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = sd * rng.normal();
  return Tensor::parameter({rows, cols}, std::move(v));
}

Linear clone_linear(const Linear& l) { return {l.w.clone(), l.b.clone()}; }

void push_linear(std::vector<NamedParam>& out, const std::string& name, ParamGroup group,
                 const Linear& l) {
  out.push_back({name + ".w", group, l.w});
  out.push_back({name + ".b", group, l.b});
}

}  // namespace

FusionModelParams FusionModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, {0x706172616dULL}));
  const std::size_t dm = config.d_model, D = config.d_graph;
  FusionModelParams p;
  p.config = config;
  p.token_embedding = make_table(rng, config.vocab_size, dm, 0.1);
  p.position_embedding = make_table(rng, config.max_positions, dm, 0.1);
  p.text_query = make_linear(rng, dm, dm);
  p.text_key = make_linear(rng, dm, dm);
  p.text_value = make_linear(rng, dm, dm);
  p.text_out = make_linear(rng, dm, dm);
  p.node_in = make_linear(rng, config.d_node, D);
  p.context_in = make_linear(rng, dm, D);
  for (std::size_t l = 0; l < config.gnn_layers; ++l) {
    GnnLayer layer;
    layer.query = make_linear(rng, D, D);
    layer.key = make_linear(rng, D, D);
    layer.value = make_linear(rng, D, D);
    layer.rel_key = make_table(rng, config.relation_slots(), D, 0.1);
    layer.rel_value = make_table(rng, config.relation_slots(), D, 0.1);
    layer.mlp1 = make_linear(rng, D, D);
    layer.mlp2 = make_linear(rng, D, D);
    p.layers.push_back(std::move(layer));
  }
  p.fuse1 = make_linear(rng, dm + D, D);
  p.fuse2 = make_linear(rng, D, D);
  p.score1 = make_linear(rng, D, D);
  p.score2 = make_linear(rng, D, 1);
  return p;
}

std::vector<NamedParam> FusionModelParams::named() const {
  std::vector<NamedParam> out;
  const auto T = ParamGroup::text, G = ParamGroup::graph;
  out.push_back({"text.token_embedding", T, token_embedding});
  out.push_back({"text.position_embedding", T, position_embedding});
  push_linear(out, "text.query", T, text_query);
  push_linear(out, "text.key", T, text_key);
  push_linear(out, "text.value", T, text_value);
  push_linear(out, "text.out", T, text_out);
  push_linear(out, "graph.node_in", G, node_in);
  push_linear(out, "graph.context_in", G, context_in);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string pre = "graph.layer" + std::to_string(l);
    const GnnLayer& L = layers[l];
    push_linear(out, pre + ".query", G, L.query);
    push_linear(out, pre + ".key", G, L.key);
    push_linear(out, pre + ".value", G, L.value);
    out.push_back({pre + ".rel_key", G, L.rel_key});
    out.push_back({pre + ".rel_value", G, L.rel_value});
    push_linear(out, pre + ".mlp1", G, L.mlp1);
    push_linear(out, pre + ".mlp2", G, L.mlp2);
  }
  push_linear(out, "fusion.hidden", G, fuse1);
  push_linear(out, "fusion.out", G, fuse2);
  push_linear(out, "score.hidden", G, score1);
  push_linear(out, "score.out", G, score2);
  return out;
}

FusionModelParams FusionModelParams::clone() const {
  FusionModelParams p;
  p.config = config;
  p.token_embedding = token_embedding.clone();
  p.position_embedding = position_embedding.clone();
  p.text_query = clone_linear(text_query);
  p.text_key = clone_linear(text_key);
  p.text_value = clone_linear(text_value);
  p.text_out = clone_linear(text_out);
  p.node_in = clone_linear(node_in);
  p.context_in = clone_linear(context_in);
  for (const GnnLayer& L : layers) {
    p.layers.push_back({clone_linear(L.query), clone_linear(L.key), clone_linear(L.value),
                        L.rel_key.clone(), L.rel_value.clone(), clone_linear(L.mlp1),
                        clone_linear(L.mlp2)});
  }
  p.fuse1 = clone_linear(fuse1);
  p.fuse2 = clone_linear(fuse2);
  p.score1 = clone_linear(score1);
  p.score2 = clone_linear(score2);
  return p;
}

std::size_t FusionModelParams::count() const {
  std::size_t n = 0;
  for (const auto& p : named()) n += p.tensor.size();
  return n;
}

void FusionModelParams::zero_grad() const {
  for (auto& p : named()) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

bool FusionModelParams::all_finite() const {
  for (const auto& p : named())
    for (double v : p.tensor.values())
      if (!std::isfinite(v)) return false;
  return true;
}

ChoiceDistribution ChoiceDistribution::from_scores(std::span<const double> scores) {
  ChoiceDistribution d;
  if (scores.empty()) return d;
  const double mx = *std::max_element(scores.begin(), scores.end());
  d.probabilities.resize(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += d.probabilities[i] = std::exp(scores[i] - mx);
  for (double& p : d.probabilities) p /= total;
  d.predicted_index = static_cast<std::size_t>(
      std::max_element(d.probabilities.begin(), d.probabilities.end()) - d.probabilities.begin());
  return d;
}

// ---------------------------------------------------------------------------
// Forward pass

std::vector<std::int32_t> choice_text(const McqInstance& instance, std::size_t choice) {
  std::vector<std::int32_t> t = instance.question_tokens;
  const auto& c = instance.choices.at(choice);
  t.insert(t.end(), c.begin(), c.end());
  return t;
}

namespace {

void check_tokens(const ModelConfig& config, std::span<const std::int32_t> tokens) {
  if (tokens.empty()) throw InputError("empty token sequence");
  if (tokens.size() > config.max_positions)
    throw InputError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_positions " +
                     std::to_string(config.max_positions));
  for (auto t : tokens)
    if (t < 0 || static_cast<std::size_t>(t) >= config.vocab_size)
      throw InputError("token id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(config.vocab_size));
}

void check_graph(const ModelConfig& config, const RelationalSubgraph& g) {
  if (g.node_kinds.size() != g.num_nodes || g.features.size() != g.num_nodes * g.d_node)
    throw DimensionError("subgraph has " + std::to_string(g.num_nodes) + " nodes but " +
                         std::to_string(g.node_kinds.size()) + " kinds and " +
                         std::to_string(g.features.size()) + " feature values");
  if (g.d_node != config.d_node)
    throw DimensionError("node feature width " + std::to_string(g.d_node) + " differs from model d_node " +
                         std::to_string(config.d_node));
  for (const auto& e : g.edges) {
    if (e.source >= g.num_nodes || e.target >= g.num_nodes)
      throw InputError("edge endpoint outside subgraph");
    if (e.relation >= config.n_relations)
      throw InputError("relation " + std::to_string(e.relation) + " outside model's " +
                       std::to_string(config.n_relations));
  }
  (void)g.context_node();
}

// Runs the single-head self-attention text block over many sequences at once.
Tensor text_batch(const FusionModelParams& p, const std::vector<std::vector<std::int32_t>>& seqs) {
  std::vector<std::uint32_t> tok, pos, seq_of, src, dst;
  std::vector<double> inv_len;
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    check_tokens(p.config, seqs[s]);
    const auto base = static_cast<std::uint32_t>(tok.size());
    const auto n = static_cast<std::uint32_t>(seqs[s].size());
    for (std::uint32_t i = 0; i < n; ++i) {
      tok.push_back(static_cast<std::uint32_t>(seqs[s][i]));
      pos.push_back(i);
      seq_of.push_back(static_cast<std::uint32_t>(s));
    }
    for (std::uint32_t j = 0; j < n; ++j)
      for (std::uint32_t i = 0; i < n; ++i) {
        src.push_back(base + i);
        dst.push_back(base + j);
      }
    inv_len.push_back(1.0 / n);
  }
  const std::size_t n_tok = tok.size();
  const Index src_i = ad::make_index(std::move(src)), dst_i = ad::make_index(std::move(dst));
  Tensor x = ad::add(ad::gather_rows(p.token_embedding, ad::make_index(std::move(tok))),
                     ad::gather_rows(p.position_embedding, ad::make_index(std::move(pos))));
  Tensor q = ad::linear(x, p.text_query.w, p.text_query.b);
  Tensor k = ad::linear(x, p.text_key.w, p.text_key.b);
  Tensor v = ad::linear(x, p.text_value.w, p.text_value.b);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.config.d_model));
  Tensor score = ad::scale(ad::head_dot(ad::gather_rows(q, dst_i), ad::gather_rows(k, src_i), 1), inv_sqrt);
  Tensor alpha = ad::segment_softmax(score, dst_i, n_tok);
  Tensor mixed = ad::scatter_add_rows(ad::head_scale(ad::gather_rows(v, src_i), alpha, 1), dst_i, n_tok);
  Tensor h = ad::add(x, mixed);
  Tensor pooled = ad::scale_rows(ad::scatter_add_rows(h, ad::make_index(std::move(seq_of)), seqs.size()),
                                 std::move(inv_len));
  return ad::linear(pooled, p.text_out.w, p.text_out.b);
}

struct GraphPass {
  Tensor nodes;  // total_nodes x D
  Tensor g;      // graphs x D
  std::vector<Tensor> alpha;  // per layer, edges x heads
  std::vector<std::size_t> node_offset;  // graphs + 1
  std::vector<std::size_t> edge_offset;  // graphs + 1
  std::vector<std::uint32_t> src, dst;
};

GraphPass graph_batch(const FusionModelParams& p, std::span<const RelationalSubgraph* const> graphs,
                      std::span<const std::vector<std::uint32_t>* const> masks, const Tensor& z,
                      const ForwardOptions& opt) {
  const ModelConfig& c = p.config;
  const std::size_t R = c.n_relations, D = c.d_graph, H = c.heads;
  GraphPass out;
  std::vector<std::uint32_t> rel, ctx;
  std::vector<double> feats;
  out.node_offset.push_back(0);
  out.edge_offset.push_back(0);
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const RelationalSubgraph& g = *graphs[gi];
    check_graph(c, g);
    const auto off = static_cast<std::uint32_t>(out.node_offset.back());
    const std::size_t ctx_node = g.context_node();
    ctx.push_back(off + static_cast<std::uint32_t>(ctx_node));
    const std::size_t f0 = feats.size();
    feats.insert(feats.end(), g.features.begin(), g.features.end());
    if (!masks.empty() && masks[gi] != nullptr) {
      for (auto r : *masks[gi]) {
        if (r >= g.num_nodes) throw InputError("mask row " + std::to_string(r) + " out of range");
        if (r == ctx_node) throw ContractError("the context node cannot be masked");
        std::fill_n(feats.begin() + static_cast<std::ptrdiff_t>(f0 + r * c.d_node), c.d_node, 0.0);
      }
    }
    for (const auto& e : g.edges) {
      out.src.push_back(off + e.source);
      out.dst.push_back(off + e.target);
      rel.push_back(e.relation);
      out.src.push_back(off + e.target);
      out.dst.push_back(off + e.source);
      rel.push_back(static_cast<std::uint32_t>(e.relation + R));
    }
    for (std::uint32_t i = 0; i < g.num_nodes; ++i) {
      out.src.push_back(off + i);
      out.dst.push_back(off + i);
      rel.push_back(static_cast<std::uint32_t>(2 * R));
    }
    out.node_offset.push_back(off + g.num_nodes);
    out.edge_offset.push_back(out.src.size());
  }
  const std::size_t N = out.node_offset.back();
  const Index src_i = ad::make_index(out.src), dst_i = ad::make_index(out.dst);
  const Index rel_i = ad::make_index(std::move(rel));
  const Index ctx_i = ad::make_index(ctx);

  Tensor x = Tensor::from({N, c.d_node}, std::move(feats));
  Tensor h = ad::add(ad::zero_mask(ad::linear(x, p.node_in.w, p.node_in.b), ctx),
                     ad::scatter_add_rows(ad::linear(z, p.context_in.w, p.context_in.b), ctx_i, N));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(D / H));
  const bool dropout = opt.dropout_rng != nullptr && c.dropout > 0.0;
  for (const GnnLayer& L : p.layers) {
    Tensor q = ad::gather_rows(ad::linear(h, L.query.w, L.query.b), dst_i);
    Tensor k = ad::add(ad::gather_rows(ad::linear(h, L.key.w, L.key.b), src_i),
                       ad::gather_rows(L.rel_key, rel_i));
    Tensor m = ad::add(ad::gather_rows(ad::linear(h, L.value.w, L.value.b), src_i),
                       ad::gather_rows(L.rel_value, rel_i));
    Tensor alpha = ad::segment_softmax(ad::scale(ad::head_dot(q, k, H), inv_sqrt), dst_i, N);
    Tensor agg = ad::scatter_add_rows(ad::head_scale(m, alpha, H), dst_i, N);
    if (opt.want_trace) out.alpha.push_back(alpha);
    if (opt.zero_message_mlp) continue;
    Tensor msg = ad::linear(ad::relu(ad::linear(agg, L.mlp1.w, L.mlp1.b)), L.mlp2.w, L.mlp2.b);
    if (dropout) {
      const double keep = 1.0 - c.dropout;
      std::vector<double> mask(msg.size());
      for (double& v : mask) v = opt.dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
      msg = ad::mul(msg, Tensor::from(msg.shape(), std::move(mask)));
    }
    h = ad::add(msg, h);
  }
  out.nodes = h;
  out.g = ad::gather_rows(h, ctx_i);
  return out;
}

ForwardTrace make_trace(const GraphPass& pass, std::size_t gi, std::size_t heads) {
  ForwardTrace t;
  const std::size_t off = pass.node_offset[gi];
  const std::size_t n = pass.node_offset[gi + 1] - off;
  t.num_nodes = n;
  for (const Tensor& a : pass.alpha) {
    std::vector<std::vector<double>> per_head(heads, std::vector<double>(n * n, 0.0));
    for (std::size_t e = pass.edge_offset[gi]; e < pass.edge_offset[gi + 1]; ++e) {
      const std::size_t s = pass.src[e] - off, j = pass.dst[e] - off;
      for (std::size_t hd = 0; hd < heads; ++hd) per_head[hd][s * n + j] += a.at(e, hd);
    }
    t.alpha.push_back(std::move(per_head));
  }
  return t;
}

std::vector<double> row_values(const Tensor& t, std::size_t r) {
  auto v = t.values();
  return {v.begin() + static_cast<std::ptrdiff_t>(r * t.cols()),
          v.begin() + static_cast<std::ptrdiff_t>((r + 1) * t.cols())};
}

Tensor score_head(const FusionModelParams& p, const Tensor& joint) {
  return ad::linear(ad::relu(ad::linear(joint, p.score1.w, p.score1.b)), p.score2.w, p.score2.b);
}

}  // namespace

void check_instance(const ModelConfig& config, const McqInstance& instance) {
  if (instance.choices.empty()) throw InputError("instance has no choices");
  if (instance.subgraphs.size() != instance.choices.size())
    throw InputError("instance has " + std::to_string(instance.choices.size()) + " choices but " +
                     std::to_string(instance.subgraphs.size()) + " subgraphs");
  if (instance.gold_index >= instance.choices.size()) throw InputError("gold_index out of range");
  for (std::size_t c = 0; c < instance.choices.size(); ++c) {
    check_tokens(config, choice_text(instance, c));
    check_graph(config, instance.subgraphs[c]);
  }
}

Tensor detach_fill(const ModelConfig& config, std::size_t rows) {
  return Tensor::filled({rows, config.d_model}, config.detach_fill);
}

Tensor fuse(const FusionModelParams& p, const Tensor& z, const Tensor& g) {
  if (z.cols() != p.config.d_model || g.cols() != p.config.d_graph || z.rows() != g.rows())
    throw DimensionError("fuse: z " + z.shape().str() + " and g " + g.shape().str() +
                         " do not match the model");
  Tensor hidden = ad::relu(ad::linear(ad::concat_cols(z, g), p.fuse1.w, p.fuse1.b));
  return ad::linear(hidden, p.fuse2.w, p.fuse2.b);
}

BatchForward forward(const FusionModelParams& p, std::span<const McqInstance* const> batch,
                     const ForwardOptions& opt) {
  BatchForward out;
  if (batch.empty()) throw InputError("empty batch");
  if (!opt.masks.empty() && opt.masks.size() != batch.size())
    throw InputError("mask list does not match batch size");
  out.instances = batch.size();
  out.choices = batch.front()->num_choices();
  std::vector<std::vector<std::int32_t>> seqs;
  std::vector<const RelationalSubgraph*> graphs;
  std::vector<const std::vector<std::uint32_t>*> masks;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const McqInstance& inst = *batch[i];
    if (inst.num_choices() != out.choices || inst.subgraphs.size() != out.choices)
      throw InputError("all instances in a batch need " + std::to_string(out.choices) + " choices");
    if (!opt.masks.empty() && opt.masks[i].size() != out.choices)
      throw InputError("mask set does not cover every choice");
    for (std::size_t c = 0; c < out.choices; ++c) {
      if (!opt.detached) seqs.push_back(choice_text(inst, c));
      graphs.push_back(&inst.subgraphs[c]);
      if (!opt.masks.empty()) masks.push_back(&opt.masks[i][c]);
    }
  }
  const Tensor z = opt.detached ? detach_fill(p.config, graphs.size()) : text_batch(p, seqs);
  GraphPass pass = graph_batch(p, graphs, masks, z, opt);
  Tensor scores = score_head(p, fuse(p, z, pass.g));
  out.scores = ad::reshape(scores, {out.instances, out.choices});
  if (opt.want_trace) {
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
      ForwardTrace t = make_trace(pass, gi, p.config.heads);
      t.z = row_values(z, gi);
      t.g = row_values(pass.g, gi);
      t.score = scores.at(gi, 0);
      out.traces.push_back(std::move(t));
    }
  }
  return out;
}

Tensor encode_text(const FusionModelParams& p, std::span<const std::int32_t> tokens) {
  return text_batch(p, {std::vector<std::int32_t>(tokens.begin(), tokens.end())});
}

GraphEncoding encode_graph(const FusionModelParams& p, const RelationalSubgraph& graph, const Tensor& z,
                           bool detached, bool zero_message_mlp) {
  const Tensor zz = detached ? detach_fill(p.config) : z;
  if (!zz.defined()) throw ContractError("encode_graph needs z unless detached");
  ForwardOptions opt;
  opt.want_trace = true;
  opt.zero_message_mlp = zero_message_mlp;
  const RelationalSubgraph* gp = &graph;
  GraphPass pass = graph_batch(p, {&gp, 1}, {}, zz, opt);
  GraphEncoding enc;
  enc.nodes = pass.nodes;
  enc.trace = make_trace(pass, 0, p.config.heads);
  enc.trace.z = row_values(zz, 0);
  enc.trace.g = row_values(pass.g, 0);
  return enc;
}

Prediction predict(const FusionModelParams& p, const McqInstance& instance, bool detached) {
  check_instance(p.config, instance);
  const McqInstance* ip = &instance;
  ForwardOptions opt;
  opt.detached = detached;
  opt.want_trace = true;
  BatchForward f = forward(p, {&ip, 1}, opt);
  return {ChoiceDistribution::from_scores(f.scores.values()), std::move(f.traces)};
}

ChoiceDistribution predict_masked(const FusionModelParams& p, const McqInstance& instance,
                                  const ChoiceMasks& masks) {
  check_instance(p.config, instance);
  const McqInstance* ip = &instance;
  ForwardOptions opt;
  opt.masks = {&masks, 1};
  return ChoiceDistribution::from_scores(forward(p, {&ip, 1}, opt).scores.values());
}

}  // namespace lkda::model
