// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <numeric>

#include "gradcheck.hpp"
#include "lkda/errors.hpp"
#include "lkda/model.hpp"
#include "lkda/synth.hpp"

namespace lkda::model {
namespace {

using ad::Tensor;
using synth::McqInstance;

class ModelTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    gen_ = new synth::GenConfig();
    gen_->n_train = 200;
    gen_->n_dev = 4;
    gen_->n_test = 4;
    gen_->confounder_strength = 0.5;
    corpus_ = new synth::Corpus(synth::generate_corpus(*gen_));
    params_ = new FusionModelParams(FusionModelParams::init(config_for(*gen_), 3));
  }
  static void TearDownTestSuite() {
    delete params_;
    delete corpus_;
    delete gen_;
  }
  static synth::GenConfig* gen_;
  static synth::Corpus* corpus_;
  static FusionModelParams* params_;
};
synth::GenConfig* ModelTest::gen_ = nullptr;
synth::Corpus* ModelTest::corpus_ = nullptr;
FusionModelParams* ModelTest::params_ = nullptr;

void expect_valid(const ChoiceDistribution& d) {
  double s = 0.0;
  for (double p : d.probabilities) {
    EXPECT_GE(p, 0.0);
    s += p;
  }
  EXPECT_NEAR(s, 1.0, 1e-9);
  const auto best = std::max_element(d.probabilities.begin(), d.probabilities.end());
  EXPECT_EQ(d.predicted_index, static_cast<std::size_t>(best - d.probabilities.begin()));
}

TEST(ChoiceDistributionTest, TiesGoToLowestIndex) {
  auto d = ChoiceDistribution::from_scores(std::vector<double>{0.5, 2.0, 2.0, -1.0});
  EXPECT_EQ(d.predicted_index, 1u);
  expect_valid(d);
  d = ChoiceDistribution::from_scores(std::vector<double>{1.0, 1.0, 1.0, 1.0});
  EXPECT_EQ(d.predicted_index, 0u);
  for (double p : d.probabilities) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(ModelConfigTest, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.gnn_layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST_F(ModelTest, EncodeTextDeterministicAndOrderSensitive) {
  std::vector<std::int32_t> t{3, 9, 12, 40};
  auto a = encode_text(*params_, t), b = encode_text(*params_, t);
  EXPECT_EQ(a.shape(), (ad::Shape{1, params_->config.d_model}));
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  std::vector<std::int32_t> r{40, 12, 9, 3};
  auto c = encode_text(*params_, r);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a.values()[i] - c.values()[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST_F(ModelTest, EncodeTextRejectsBadTokens) {
  std::vector<std::int32_t> oov{1, static_cast<std::int32_t>(params_->config.vocab_size)};
  EXPECT_THROW(encode_text(*params_, oov), InputError);
  EXPECT_THROW(encode_text(*params_, std::vector<std::int32_t>{}), InputError);
}

TEST_F(ModelTest, EncodeTextGradientMatchesFiniteDifferences) {
  auto p = params_->clone();
  std::vector<std::int32_t> t{5, 17, 2, 33, 5};
  auto res = lkda::testing::grad_check(
      [&] {
        auto z = encode_text(p, t);
        return ad::sum(ad::mul(z, z));
      },
      {p.token_embedding, p.position_embedding, p.text_query.w, p.text_out.b});
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

TEST_F(ModelTest, SingleNodeGraphHasUnitAttention) {
  synth::RelationalSubgraph g;
  g.num_nodes = 1;
  g.node_kinds = {synth::NodeKind::context};
  g.relation_count = gen_->relation_count;
  g.d_node = gen_->d_node;
  g.features.assign(g.d_node, 0.0);
  auto enc = encode_graph(*params_, g, {}, true);
  ASSERT_EQ(enc.trace.alpha.size(), params_->config.gnn_layers);
  for (const auto& layer : enc.trace.alpha) {
    ASSERT_EQ(layer.size(), params_->config.heads);
    for (const auto& head : layer) EXPECT_EQ(head, std::vector<double>{1.0});
  }
}

TEST_F(ModelTest, FeatureRowsMustMatchNodeCount) {
  auto g = corpus_->train[0].subgraphs[0];
  g.features.pop_back();
  EXPECT_THROW(encode_graph(*params_, g, {}, true), DimensionError);
}

TEST_F(ModelTest, AttentionNormalizesOverInNeighborhoods) {
  std::vector<const McqInstance*> batch;
  for (const auto& inst : corpus_->train) batch.push_back(&inst);
  ForwardOptions opt;
  opt.want_trace = true;
  const auto f = forward(*params_, batch, opt);
  ASSERT_EQ(f.traces.size(), batch.size() * gen_->n_choices);
  for (std::size_t t = 0; t < f.traces.size(); ++t) {
    const auto& tr = f.traces[t];
    const auto& g = batch[t / gen_->n_choices]->subgraphs[t % gen_->n_choices];
    for (std::size_t l = 0; l < tr.alpha.size(); ++l)
      for (std::size_t h = 0; h < tr.alpha[l].size(); ++h)
        for (std::size_t j = 0; j < tr.num_nodes; ++j) {
          double s = 0.0;
          for (std::size_t src = 0; src < tr.num_nodes; ++src) s += tr.at(l, h, src, j);
          ASSERT_NEAR(s, 1.0, 1e-9) << "trace " << t << " layer " << l << " node " << j;
          ASSERT_GT(tr.at(l, h, j, j), 0.0);
        }
    // zero wherever there is no edge in either direction
    std::vector<char> linked(tr.num_nodes * tr.num_nodes, 0);
    for (const auto& e : g.edges) linked[e.source * tr.num_nodes + e.target] = linked[e.target * tr.num_nodes + e.source] = 1;
    for (std::size_t s = 0; s < tr.num_nodes; ++s)
      for (std::size_t j = 0; j < tr.num_nodes; ++j)
        if (s != j && !linked[s * tr.num_nodes + j]) ASSERT_EQ(tr.at(0, 0, s, j), 0.0);
  }
}

TEST_F(ModelTest, PermutedNodeOrderPermutesOutputs) {
  const auto& g = corpus_->train[1].subgraphs[2];
  const auto z = encode_text(*params_, corpus_->train[1].question_tokens);
  std::vector<std::uint32_t> perm(g.num_nodes);
  std::iota(perm.begin(), perm.end(), 0u);
  Rng rng(17);
  rng.shuffle(perm);
  synth::RelationalSubgraph h = g;
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    h.node_kinds[perm[v]] = g.node_kinds[v];
    for (std::size_t d = 0; d < g.d_node; ++d) h.features[perm[v] * g.d_node + d] = g.features[v * g.d_node + d];
  }
  for (auto& e : h.edges) e.source = perm[e.source], e.target = perm[e.target];
  const auto a = encode_graph(*params_, g, z, false);
  const auto b = encode_graph(*params_, h, z, false);
  const std::size_t D = params_->config.d_graph;
  for (std::size_t v = 0; v < g.num_nodes; ++v)
    for (std::size_t d = 0; d < D; ++d) EXPECT_NEAR(a.nodes.at(v, d), b.nodes.at(perm[v], d), 1e-10);
  for (std::size_t l = 0; l < a.trace.alpha.size(); ++l)
    for (std::size_t s = 0; s < g.num_nodes; ++s)
      for (std::size_t j = 0; j < g.num_nodes; ++j)
        EXPECT_NEAR(a.trace.at(l, 1, s, j), b.trace.at(l, 1, perm[s], perm[j]), 1e-12);
  for (std::size_t d = 0; d < D; ++d) EXPECT_NEAR(a.trace.g[d], b.trace.g[d], 1e-10);
}

TEST_F(ModelTest, ZeroMessageMlpLeavesInputEmbeddings) {
  const auto& g = corpus_->train[2].subgraphs[0];
  const auto z = encode_text(*params_, corpus_->train[2].question_tokens);
  const auto enc = encode_graph(*params_, g, z, false, true);
  const auto x = Tensor::from({g.num_nodes, g.d_node}, g.features);
  const auto h0 = ad::linear(x, params_->node_in.w, params_->node_in.b);
  const auto c0 = ad::linear(z, params_->context_in.w, params_->context_in.b);
  const std::size_t ctx = g.context_node();
  for (std::size_t v = 0; v < g.num_nodes; ++v)
    for (std::size_t d = 0; d < params_->config.d_graph; ++d)
      EXPECT_EQ(enc.nodes.at(v, d), v == ctx ? c0.at(0, d) : h0.at(v, d));
}

TEST_F(ModelTest, FuseWithZeroFillDependsOnlyOnG) {
  Rng rng(4);
  auto g = lkda::testing::random_param(rng, 3, params_->config.d_graph);
  auto fill = detach_fill(params_->config, 3);
  for (double v : fill.values()) EXPECT_EQ(v, 0.0);
  auto a = fuse(*params_, fill, g);
  EXPECT_EQ(a.shape(), (ad::Shape{3, params_->config.d_graph}));
  auto zero = Tensor::zeros({3, params_->config.d_model});
  auto b = fuse(*params_, zero, g);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  auto z = lkda::testing::random_param(rng, 3, params_->config.d_model);
  auto p = params_->clone();
  auto res = lkda::testing::grad_check([&] { return ad::sum(ad::mul(fuse(p, z, g), fuse(p, z, g))); },
                                       {z, g, p.fuse1.w, p.fuse2.b});
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

TEST_F(ModelTest, DetachedPredictionIgnoresText) {
  for (std::size_t i = 0; i < 50; ++i) {
    McqInstance a = corpus_->train[i];
    McqInstance b = a;
    for (auto& t : b.question_tokens) t = static_cast<std::int32_t>((t * 7 + 3) % gen_->vocab_size);
    for (auto& c : b.choices) c = {static_cast<std::int32_t>(i % gen_->vocab_size), 1, 2};
    const auto pa = predict(*params_, a, true).distribution;
    const auto pb = predict(*params_, b, true).distribution;
    EXPECT_EQ(pa.probabilities, pb.probabilities);
    expect_valid(pa);
    const auto fa = predict(*params_, a, false).distribution;
    const auto fb = predict(*params_, b, false).distribution;
    EXPECT_NE(fa.probabilities, fb.probabilities);
  }
}

TEST_F(ModelTest, UntrainedModelIsNearUniform) {
  std::vector<double> avg(gen_->n_choices, 0.0);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto d = predict(*params_, corpus_->train[i], false).distribution;
    for (std::size_t c = 0; c < avg.size(); ++c) avg[c] += d.probabilities[c] / 100.0;
  }
  for (double p : avg) EXPECT_NEAR(p, 0.25, 0.05);
}

TEST_F(ModelTest, MaskingContract) {
  const auto& inst = corpus_->train[3];
  ChoiceMasks empty(inst.num_choices());
  EXPECT_EQ(predict_masked(*params_, inst, empty).probabilities,
            predict(*params_, inst, false).distribution.probabilities);

  ChoiceMasks bad(inst.num_choices());
  bad[1] = {static_cast<std::uint32_t>(inst.subgraphs[1].context_node())};
  EXPECT_THROW(predict_masked(*params_, inst, bad), ContractError);

  McqInstance zeroed = inst;
  auto& g = zeroed.subgraphs[0];
  const std::uint32_t victim = g.context_node() == 0 ? 1 : 0;
  std::fill(g.features.begin() + victim * g.d_node, g.features.begin() + (victim + 1) * g.d_node, 0.0);
  ChoiceMasks one(inst.num_choices());
  one[0] = {victim};
  EXPECT_EQ(predict_masked(*params_, zeroed, one).probabilities,
            predict(*params_, zeroed, false).distribution.probabilities);
}

TEST_F(ModelTest, MaskingEverythingIsChance) {
  std::size_t hits = 0;
  for (const auto& inst : corpus_->train) {
    ChoiceMasks all(inst.num_choices());
    for (std::size_t c = 0; c < inst.num_choices(); ++c)
      for (std::uint32_t v = 0; v < inst.subgraphs[c].num_nodes; ++v)
        if (v != inst.subgraphs[c].context_node()) all[c].push_back(v);
    hits += predict_masked(*params_, inst, all).predicted_index == inst.gold_index;
  }
  EXPECT_NEAR(static_cast<double>(hits) / static_cast<double>(corpus_->train.size()), 0.25, 0.08);
}

TEST_F(ModelTest, BatchedForwardMatchesSingleInstances) {
  std::vector<const McqInstance*> batch;
  for (std::size_t i = 0; i < 9; ++i) batch.push_back(&corpus_->train[i]);
  for (bool detached : {false, true}) {
    ForwardOptions opt;
    opt.detached = detached;
    const auto f = forward(*params_, batch, opt);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto one = forward(*params_, {&batch[i], 1}, opt);
      for (std::size_t c = 0; c < f.choices; ++c) EXPECT_EQ(f.scores.at(i, c), one.scores.at(0, c));
    }
  }
}

TEST_F(ModelTest, FullModelGradientOnTwoInstances) {
  ModelConfig small = params_->config;
  small.d_model = 8;
  small.d_graph = 8;
  small.gnn_layers = 2;
  auto p = FusionModelParams::init(small, 9);
  std::vector<const McqInstance*> batch{&corpus_->train[0], &corpus_->train[1]};
  auto loss = [&] {
    auto lp = ad::log_softmax_rows(forward(p, batch).scores);
    std::vector<double> pick(lp.size(), 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) pick[i * lp.cols() + batch[i]->gold_index] = -0.5;
    return ad::sum(ad::mul(lp, Tensor::from(lp.shape(), pick)));
  };
  std::vector<Tensor> leaves;
  for (const auto& np : p.named()) leaves.push_back(np.tensor);
  auto res = lkda::testing::grad_check(loss, leaves, 400);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

TEST_F(ModelTest, ParamsNamedCloneAndCount) {
  auto named = params_->named();
  std::size_t total = 0;
  for (const auto& np : named) total += np.tensor.size();
  EXPECT_EQ(total, params_->count());
  EXPECT_EQ(named.front().name, "text.token_embedding");
  auto c = params_->clone();
  c.token_embedding.mutable_values()[0] += 1.0;
  EXPECT_NE(c.token_embedding.values()[0], params_->token_embedding.values()[0]);
  EXPECT_TRUE(params_->all_finite());
  auto again = FusionModelParams::init(params_->config, 3);
  EXPECT_TRUE(std::equal(again.score2.w.values().begin(), again.score2.w.values().end(),
                         params_->score2.w.values().begin()));
}

TEST_F(ModelTest, MalformedInstanceIsInputError) {
  McqInstance inst = corpus_->train[0];
  inst.choices.pop_back();
  EXPECT_THROW(predict(*params_, inst, false), InputError);
  inst = corpus_->train[0];
  inst.subgraphs[0].d_node = 5;
  EXPECT_THROW(predict(*params_, inst, false), DimensionError);
}

}  // namespace
}  // namespace lkda::model
