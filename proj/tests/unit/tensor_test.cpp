// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "lkda/errors.hpp"
#include "lkda/kernels.hpp"
#include "lkda/tensor.hpp"

namespace lkda::ad {
namespace {

using lkda::testing::grad_check;
using lkda::testing::random_param;

// Contracts an arbitrary output against fixed random weights so every output
// coordinate contributes to the loss.
Tensor project(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  std::vector<double> w(y.size());
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  return sum(mul(y, Tensor::from(y.shape(), std::move(w))));
}

TEST(Tensor, ShapeMismatchIsDimensionError) {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({3, 2});
  EXPECT_THROW(add(a, b), DimensionError);
  EXPECT_THROW(matmul(a, a), DimensionError);
  EXPECT_THROW(concat_cols(a, Tensor::zeros({3, 1})), DimensionError);
  EXPECT_THROW(Tensor::from({2, 2}, {1.0}), DimensionError);
}

TEST(Tensor, MatmulExample) {
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::from({2, 1}, {5, 6});
  auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(c.at(0, 0), 17.0);
  EXPECT_DOUBLE_EQ(c.at(1, 0), 39.0);
}

TEST(Tensor, SmallExamples) {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto p = matmul(eye, m);
  EXPECT_TRUE(std::equal(p.values().begin(), p.values().end(), m.values().begin()));
  EXPECT_DOUBLE_EQ(matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})).item(), 11.0);

  auto half = softmax_rows(Tensor::from({1, 2}, {0.0, 0.0}));
  EXPECT_EQ(half.at(0, 0), 0.5);
  EXPECT_EQ(half.at(0, 1), 0.5);
  auto big = softmax_rows(Tensor::from({1, 2}, {1000.0, 0.0}));
  EXPECT_NEAR(big.at(0, 0), 1.0, 1e-15);
  EXPECT_GE(big.at(0, 1), 0.0);
  EXPECT_LT(big.at(0, 1), 1e-300);
  auto three = softmax_rows(Tensor::from({1, 3}, {1.0, 2.0, 3.0}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(three.at(0, c), std::exp(c + 1.0) / z, 1e-15);

  auto r = relu(Tensor::from({1, 2}, {-1.0, 2.0}));
  EXPECT_EQ(r.at(0, 0), 0.0);
  EXPECT_EQ(r.at(0, 1), 2.0);
  auto t = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  auto zm = zero_mask(t, std::vector<std::uint32_t>{1});
  EXPECT_EQ(std::vector<double>(zm.values().begin(), zm.values().end()), (std::vector<double>{1, 2, 0, 0, 5, 6}));
}

TEST(Tensor, ZeroMaskBlocksGradient) {
  auto x = Tensor::parameter({3, 2}, {1, 2, 3, 4, 5, 6});
  x.zero_grad();
  Tape tape;
  Recording rec(tape);
  tape.backward(sum(zero_mask(x, std::vector<std::uint32_t>{1})));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{1, 1, 0, 0, 1, 1}));
}

TEST(Tensor, RepeatedBackwardAccumulatesIntoLeaves) {
  auto x = Tensor::parameter({1, 1}, {3.0});
  x.zero_grad();
  Tape tape;
  Recording rec(tape);
  auto y = sum(mul(x, x));
  tape.backward(y);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Tensor, TapeIsTopologicallyOrdered) {
  Rng rng(6);
  auto w = random_param(rng, 3, 3);
  Tape tape;
  Recording rec(tape);
  (void)sum(relu(matmul(w, w)));
  for (std::size_t i = 0; i < tape.size(); ++i) {
    EXPECT_EQ(tape.entries()[i].output, static_cast<std::int64_t>(i));
    for (auto in : tape.entries()[i].inputs) EXPECT_LT(in, static_cast<std::int64_t>(i));
  }
}

TEST(Tensor, SoftmaxRowsAreDistributions) {
  Rng rng(1);
  auto x = random_param(rng, 5, 7, -30.0, 30.0);
  auto p = softmax_rows(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_GE(p.at(r, c), 0.0);
      s += p.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Tensor, SoftmaxShiftInvariantAndStable) {
  auto x = Tensor::from({1, 3}, {1.0, 2.0, 3.0});
  auto y = Tensor::from({1, 3}, {1001.0, 1002.0, 1003.0});
  auto px = softmax_rows(x), py = softmax_rows(y);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(px.at(0, c), py.at(0, c), 1e-12);
  auto lp = log_softmax_rows(Tensor::from({1, 2}, {1000.0, -1000.0}));
  EXPECT_TRUE(std::isfinite(lp.at(0, 1)));
  EXPECT_NEAR(lp.at(0, 1), -2000.0, 1e-9);
}

TEST(Tensor, SquareGradient) {
  auto x = Tensor::parameter({1, 1}, {3.0});
  Tape tape;
  Recording rec(tape);
  auto y = sum(mul(x, x));
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Tensor, ConstantLossLeavesZeroGradient) {
  auto x = Tensor::parameter({2, 2}, {1, 2, 3, 4});
  x.zero_grad();
  Tape tape;
  Recording rec(tape);
  auto y = sum(scale(detach(x), 2.0));
  tape.backward(y);
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Tensor, BackwardNeedsScalar) {
  auto x = Tensor::parameter({2, 2}, {1, 2, 3, 4});
  Tape tape;
  Recording rec(tape);
  auto y = scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Tensor, LogOfNonPositiveIsDomainError) {
  EXPECT_THROW(log(Tensor::from({1, 2}, {1.0, 0.0})), DomainError);
}

TEST(Tensor, NoTapeNoRecording) {
  auto x = Tensor::parameter({1, 2}, {1, 2});
  auto y = mul(x, x);
  EXPECT_LT(y.node_id(), 0);
  Tape tape;
  {
    Recording rec(tape);
    (void)mul(x, x);
  }
  EXPECT_EQ(tape.size(), 1u);
  (void)mul(x, x);
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Tensor, BackwardIsDeterministic) {
  Rng rng(5);
  auto w = random_param(rng, 4, 3);
  auto x = random_param(rng, 6, 4);
  auto run = [&] {
    w.zero_grad();
    Tape tape;
    Recording rec(tape);
    auto y = project(softmax_rows(relu(matmul(x, w))));
    tape.backward(y);
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

struct OpCase {
  const char* name;
  std::function<Tensor(std::vector<Tensor>&)> build;
  std::vector<Shape> shapes;
  double lo = -1.0;
  double hi = 1.0;
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const auto& c = GetParam();
  Rng rng(11);
  std::vector<Tensor> leaves;
  for (const auto& s : c.shapes) leaves.push_back(random_param(rng, s.rows, s.cols, c.lo, c.hi));
  auto res = grad_check([&] { return project(c.build(leaves)); }, leaves);
  EXPECT_LT(res.max_rel_error, 1e-4) << c.name << ": " << res.worst;
  EXPECT_GT(res.coords, 0u);
}

const auto kIdx = make_index({2, 0, 1, 2, 3, 0});
const auto kSeg = make_index({0, 0, 1, 1, 1, 2});

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradient,
    ::testing::Values(
        OpCase{"matmul", [](auto& l) { return matmul(l[0], l[1]); }, {{3, 4}, {4, 5}}},
        OpCase{"linear", [](auto& l) { return linear(l[0], l[1], l[2]); }, {{3, 4}, {4, 5}, {1, 5}}},
        OpCase{"add", [](auto& l) { return add(l[0], l[1]); }, {{3, 4}, {3, 4}}},
        OpCase{"sub", [](auto& l) { return sub(l[0], l[1]); }, {{3, 4}, {3, 4}}},
        OpCase{"mul", [](auto& l) { return mul(l[0], l[1]); }, {{3, 4}, {3, 4}}},
        OpCase{"add_row", [](auto& l) { return add_row(l[0], l[1]); }, {{3, 4}, {1, 4}}},
        OpCase{"scale", [](auto& l) { return scale(l[0], -1.7); }, {{3, 4}}},
        OpCase{"add_scalar", [](auto& l) { return add_scalar(l[0], 0.3); }, {{3, 4}}},
        OpCase{"relu", [](auto& l) { return relu(l[0]); }, {{3, 4}}, 0.1, 1.0},
        OpCase{"relu_neg", [](auto& l) { return relu(scale(l[0], -1.0)); }, {{3, 4}}, 0.1, 1.0},
        OpCase{"exp", [](auto& l) { return exp(l[0]); }, {{3, 4}}},
        OpCase{"log", [](auto& l) { return log(l[0]); }, {{3, 4}}, 0.5, 2.0},
        OpCase{"logaddexp", [](auto& l) { return logaddexp(l[0], l[1]); }, {{3, 4}, {3, 4}}, -3.0, 3.0},
        OpCase{"scale_rows", [](auto& l) { return scale_rows(l[0], {0.5, -2.0, 3.0}); }, {{3, 4}}},
        OpCase{"sum", [](auto& l) { return sum(l[0]); }, {{3, 4}}},
        OpCase{"mean", [](auto& l) { return mean(l[0]); }, {{3, 4}}},
        OpCase{"row_sum", [](auto& l) { return row_sum(l[0]); }, {{3, 4}}},
        OpCase{"softmax_rows", [](auto& l) { return softmax_rows(l[0]); }, {{3, 4}}, -3.0, 3.0},
        OpCase{"log_softmax_rows", [](auto& l) { return log_softmax_rows(l[0]); }, {{3, 4}}, -3.0, 3.0},
        OpCase{"concat_cols", [](auto& l) { return concat_cols(l[0], l[1]); }, {{3, 4}, {3, 2}}},
        OpCase{"concat_rows", [](auto& l) { return concat_rows(l[0], l[1]); }, {{3, 4}, {2, 4}}},
        OpCase{"gather_rows", [](auto& l) { return gather_rows(l[0], kIdx); }, {{4, 3}}},
        OpCase{"scatter_add_rows", [](auto& l) { return scatter_add_rows(l[0], kIdx, 5); }, {{6, 3}}},
        OpCase{"zero_mask", [](auto& l) { return zero_mask(l[0], std::vector<std::uint32_t>{1}); }, {{3, 4}}},
        OpCase{"reshape", [](auto& l) { return reshape(l[0], {2, 6}); }, {{3, 4}}},
        OpCase{"head_dot", [](auto& l) { return head_dot(l[0], l[1], 2); }, {{5, 4}, {5, 4}}},
        OpCase{"head_scale", [](auto& l) { return head_scale(l[0], l[1], 2); }, {{5, 4}, {5, 2}}},
        OpCase{"segment_softmax", [](auto& l) { return segment_softmax(l[0], kSeg, 3); }, {{6, 2}}, -3.0, 3.0},
        OpCase{"composite",
               [](auto& l) {
                 auto h = relu(linear(l[0], l[1], l[2]));
                 return log_softmax_rows(add(h, gather_rows(h, make_index({1, 0, 2}))));
               },
               {{3, 4}, {4, 4}, {1, 4}}}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(Tensor, SegmentSoftmaxNormalizesPerSegment) {
  Rng rng(2);
  auto s = random_param(rng, 6, 2, -5.0, 5.0);
  auto p = segment_softmax(s, kSeg, 3);
  for (std::size_t h = 0; h < 2; ++h) {
    double seg[3] = {0, 0, 0};
    for (std::size_t e = 0; e < 6; ++e) seg[(*kSeg)[e]] += p.at(e, h);
    for (double v : seg) EXPECT_NEAR(v, 1.0, 1e-12);
  }
}

TEST(Tensor, GradientsMatchAcrossKernelVariants) {
  if (kernels::avx2_table() == nullptr) GTEST_SKIP() << "no AVX2";
  Rng rng(8);
  auto w = random_param(rng, 9, 7);
  auto x = random_param(rng, 13, 9);
  auto run = [&](const char* variant) {
    kernels::select(variant);
    w.zero_grad();
    Tape tape;
    Recording rec(tape);
    auto y = project(softmax_rows(relu(matmul(x, w))));
    tape.backward(y);
    return std::make_pair(y.item(), std::vector<double>(w.grad().begin(), w.grad().end()));
  };
  const std::string before = kernels::active().name;
  auto a = run("scalar");
  auto b = run("avx2");
  kernels::select(before);
  EXPECT_EQ(a, b);
}

}  // namespace
}  // namespace lkda::ad
