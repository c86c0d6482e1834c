// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "ndif/adam.hpp"
#include "ndif/ops.hpp"
#include "ndif/tensor.hpp"

using namespace ndif;
using ndif::testing::grad_check;

namespace {

Tensor randn(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor::randn(std::move(s), rng);
}

std::vector<double> values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

// Direct-loop cross-correlation, independent of the im2col/GEMM path.
std::vector<double> naive_conv1d(const Tensor& x, const Tensor& w,
                                 const Tensor& b, std::size_t stride,
                                 std::size_t pad) {
  const std::size_t B = x.dim(0), Ci = x.dim(1), L = x.dim(2);
  const std::size_t Co = w.dim(0), K = w.dim(2);
  const std::size_t Lo = (L + 2 * pad - K) / stride + 1;
  std::vector<double> y(B * Co * Lo);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t co = 0; co < Co; ++co)
      for (std::size_t o = 0; o < Lo; ++o) {
        double acc = b[co];
        for (std::size_t ci = 0; ci < Ci; ++ci)
          for (std::size_t k = 0; k < K; ++k) {
            const long pos = static_cast<long>(o * stride + k) - static_cast<long>(pad);
            if (pos < 0 || pos >= static_cast<long>(L)) continue;
            acc += w[(co * Ci + ci) * K + k] * x[(n * Ci + ci) * L + pos];
          }
        y[(n * Co + co) * Lo + o] = acc;
      }
  return y;
}

// Scalar loss that touches every output element with a distinct weight.
Tensor probe_loss(Graph& g, const Tensor& out, std::uint64_t seed) {
  return ops::mse_loss(g, out, randn(out.shape(), seed));
}

}  // namespace

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t = Tensor::zeros({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(shape_numel(t.shape()), t.data().size());
  EXPECT_THROW(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST(Tensor, GradientBufferMatchesShape) {
  Tensor t = Tensor::zeros({3, 5});
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad_buffer().size(), t.numel());
}

TEST(Conv1d, IdentityKernel) {
  Graph g = Graph::inference();
  auto y = ops::conv1d(g, Tensor::from({1, 1, 4}, {1, 2, 3, 4}),
                       Tensor::from({1, 1, 1}, {1}), Tensor::zeros({1}));
  EXPECT_EQ(values(y), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Conv1d, ZeroWeightsAnnihilate) {
  Graph g = Graph::inference();
  auto y = ops::conv1d(g, randn({2, 3, 9}, 1), Tensor::zeros({4, 3, 3}),
                       Tensor::zeros({4}), 1, 1);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv1d, HandCrossCorrelationWithPadding) {
  Graph g = Graph::inference();
  auto y = ops::conv1d(g, Tensor::from({1, 1, 3}, {1, 2, 3}),
                       Tensor::from({1, 1, 3}, {1, 0, -1}), Tensor::zeros({1}), 1,
                       1);
  EXPECT_EQ(values(y), (std::vector<double>{-2, -2, 2}));
}

TEST(Conv1d, ChannelMismatchIsShapeError) {
  Graph g = Graph::inference();
  EXPECT_THROW(ops::conv1d(g, Tensor::zeros({1, 2, 5}), Tensor::zeros({1, 3, 3}),
                           Tensor::zeros({1})),
               ShapeError);
}

TEST(Conv1d, OutputLengthAndValuesMatchDirectLoops) {
  std::uint64_t seed = 100;
  for (std::size_t L : {1, 2, 5, 8, 13}) {
    for (std::size_t K : {1, 3, 5}) {
      for (std::size_t stride : {1, 2, 3}) {
        for (std::size_t pad : {0, 1, 2}) {
          if (L + 2 * pad < K) {
            EXPECT_THROW(ops::conv1d_output_length(L, K, stride, pad), ShapeError);
            continue;
          }
          auto x = randn({2, 3, L}, ++seed);
          auto w = randn({4, 3, K}, ++seed);
          auto b = randn({4}, ++seed);
          Graph g = Graph::inference();
          auto y = ops::conv1d(g, x, w, b, stride, pad);
          const std::size_t expected_len = (L + 2 * pad - K) / stride + 1;
          ASSERT_EQ(y.dim(2), expected_len);
          const auto ref = naive_conv1d(x, w, b, stride, pad);
          for (std::size_t i = 0; i < ref.size(); ++i) {
            EXPECT_NEAR(y[i], ref[i], 1e-12);
          }
        }
      }
    }
  }
}

TEST(GroupNorm, ConstantInputNormalisesToZero) {
  Graph g = Graph::inference();
  auto y = ops::group_norm(g, Tensor::full({2, 4, 6}, 3.5), 2,
                           Tensor::full({4}, 1.0), Tensor::zeros({4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(GroupNorm, ZeroGammaCollapsesToBeta) {
  Graph g = Graph::inference();
  auto y = ops::group_norm(g, randn({2, 4, 6}, 3), 2, Tensor::zeros({4}),
                           Tensor::full({4}, 0.75));
  for (double v : y.data()) EXPECT_EQ(v, 0.75);
}

TEST(GroupNorm, HandExample) {
  Graph g = Graph::inference();
  auto y = ops::group_norm(g, Tensor::from({1, 1, 2}, {0, 2}), 1,
                           Tensor::full({1}, 1.0), Tensor::zeros({1}), 0.0);
  EXPECT_DOUBLE_EQ(y[0], -1.0);
  EXPECT_DOUBLE_EQ(y[1], 1.0);
}

TEST(GroupNorm, IndivisibleChannelsIsConfigError) {
  Graph g = Graph::inference();
  EXPECT_THROW(ops::group_norm(g, Tensor::zeros({1, 6, 4}), 4,
                               Tensor::full({6}, 1.0), Tensor::zeros({6})),
               ConfigError);
}

TEST(Silu, Values) {
  Graph g = Graph::inference();
  auto y = ops::silu(g, Tensor::from({3}, {0.0, 50.0, 1.0}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 50.0, 1e-9);
  EXPECT_NEAR(y[2], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(y[2], 0.731058, 1e-6);
}

TEST(Linear, IdentityAndBias) {
  Graph g = Graph::inference();
  auto x = randn({3, 2}, 4);
  auto y = ops::linear(g, x, Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2}));
  EXPECT_EQ(values(y), values(x));
  auto z = ops::linear(g, x, Tensor::zeros({2, 2}), Tensor::from({2}, {5, -1}));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(z[2 * r], 5.0);
    EXPECT_EQ(z[2 * r + 1], -1.0);
  }
}

TEST(Linear, HandProduct) {
  Graph g = Graph::inference();
  auto y = ops::linear(g, Tensor::from({1, 2}, {1, 2}),
                       Tensor::from({2, 2}, {1, 1, 0, 2}), Tensor::from({2}, {1, -1}));
  EXPECT_EQ(values(y), (std::vector<double>{4, 3}));
  EXPECT_THROW(ops::linear(g, Tensor::zeros({1, 3}), Tensor::zeros({2, 2}),
                           Tensor::zeros({2})),
               ShapeError);
}

TEST(Upsample, DuplicatesAndAdjointSumsPairs) {
  Graph g;
  auto x = Tensor::from({1, 1, 3}, {1, 2, 3});
  EXPECT_EQ(values(ops::upsample_nearest2(g, x)),
            (std::vector<double>{1, 1, 2, 2, 3, 3}));

  auto c = Tensor::full({2, 3, 4}, 1.5);
  Graph g2 = Graph::inference();
  auto uc = ops::upsample_nearest2(g2, c);
  EXPECT_EQ(uc.dim(2), 8u);
  for (double v : uc.data()) EXPECT_EQ(v, 1.5);

  Graph g3;
  auto x2 = Tensor::from({1, 1, 2}, {0.3, -0.7});
  x2.set_requires_grad(true);
  auto loss = ops::sum(g3, ops::upsample_nearest2(g3, x2));
  g3.backward(loss);
  EXPECT_EQ(x2.grad()[0], 2.0);
  EXPECT_EQ(x2.grad()[1], 2.0);
}

TEST(Upsample, AdjointWithArbitraryUpstream) {
  // Run the recorded backward closure with a hand-set upstream gradient.
  Graph g;
  auto x = Tensor::from({1, 1, 2}, {0.3, -0.7});
  x.set_requires_grad(true);
  auto up = ops::upsample_nearest2(g, x);
  auto target = Tensor::from({1, 1, 4}, {0, 0, 0, 0});
  // mse gradient is 2 (u - t) / 4 = u / 2; pick u via x so upstream is known:
  // u = (0.3, 0.3, -0.7, -0.7) -> upstream (0.15, 0.15, -0.35, -0.35).
  auto loss = ops::mse_loss(g, up, target);
  g.backward(loss);
  EXPECT_NEAR(x.grad()[0], 0.15 + 0.15, 1e-15);
  EXPECT_NEAR(x.grad()[1], -0.35 - 0.35, 1e-15);
}

TEST(Mse, Values) {
  Graph g = Graph::inference();
  auto a = randn({5}, 9);
  EXPECT_EQ(ops::mse_loss(g, a, a).item(), 0.0);
  EXPECT_DOUBLE_EQ(
      ops::mse_loss(g, Tensor::from({2}, {0, 0}), Tensor::from({2}, {3, 4})).item(),
      12.5);
  EXPECT_THROW(ops::mse_loss(g, Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
}

TEST(Mse, GradientOfSingleElement) {
  Graph g;
  auto p = Tensor::from({1}, {1.0});
  p.set_requires_grad(true);
  auto l = ops::mse_loss(g, p, Tensor::from({1}, {0.0}));
  g.backward(l);
  EXPECT_DOUBLE_EQ(p.grad()[0], 2.0);
}

TEST(Backward, SumGivesOnes) {
  Graph g;
  auto x = randn({3, 4}, 5);
  x.set_requires_grad(true);
  auto l = ops::sum(g, x);
  g.backward(l);
  for (double v : x.grad()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, MseAgainstDetachedCopyIsZero) {
  Graph g;
  auto x = randn({2, 3}, 6);
  x.set_requires_grad(true);
  auto l = ops::mse_loss(g, x, x.detach());
  g.backward(l);
  for (double v : x.grad()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, NonScalarIsRejected) {
  Graph g;
  auto x = randn({2, 3}, 7);
  x.set_requires_grad(true);
  auto y = ops::silu(g, x);
  EXPECT_THROW(g.backward(y), ShapeError);
}

TEST(Backward, UnreachableParameterGetsZeroGradient) {
  Graph g;
  auto x = randn({2, 3}, 8);
  auto unused = randn({2, 3}, 9);
  x.set_requires_grad(true);
  unused.set_requires_grad(true);
  auto dead_branch = ops::silu(g, unused);
  (void)dead_branch;
  auto l = ops::sum(g, ops::silu(g, x));
  g.backward(l);
  ASSERT_TRUE(unused.has_grad());
  for (double v : unused.grad()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, EveryNodeRunsOnceAndGraphIsSingleUse) {
  Graph g;
  auto x = randn({4}, 10);
  x.set_requires_grad(true);
  auto y = ops::add(g, x, x);  // both inputs alias x: gradient 2
  auto l = ops::sum(g, y);
  EXPECT_EQ(g.size(), 2u);
  g.backward(l);
  for (double v : x.grad()) EXPECT_EQ(v, 2.0);
  EXPECT_THROW(g.backward(l), std::logic_error);
}

TEST(GradCheck, Conv1dStrideAndPadding) {
  for (auto [stride, pad, K] : {std::tuple{1, 1, 3}, std::tuple{2, 1, 3},
                                std::tuple{1, 0, 1}, std::tuple{3, 2, 5}}) {
    auto x = randn({2, 3, 9}, 20);
    auto w = randn({4, 3, static_cast<std::size_t>(K)}, 21);
    auto b = randn({4}, 22);
    auto res = grad_check(
        [&](Graph& g) {
          return probe_loss(g, ops::conv1d(g, x, w, b, stride, pad), 23);
        },
        {x, w, b});
    EXPECT_LT(res.max_rel_error, 1e-4) << "stride " << stride << " pad " << pad;
  }
}

TEST(GradCheck, GroupNorm) {
  auto x = randn({2, 4, 5}, 30);
  auto gamma = randn({4}, 31);
  auto beta = randn({4}, 32);
  auto res = grad_check(
      [&](Graph& g) {
        return probe_loss(g, ops::group_norm(g, x, 2, gamma, beta), 33);
      },
      {x, gamma, beta});
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(GradCheck, SiluLinearUpsampleConcat) {
  auto a = randn({2, 6}, 40);
  auto w = randn({3, 6}, 41);
  auto b = randn({3}, 42);
  auto res = grad_check(
      [&](Graph& g) { return probe_loss(g, ops::silu(g, ops::linear(g, a, w, b)), 43); },
      {a, w, b});
  EXPECT_LT(res.max_rel_error, 1e-4);

  auto u = randn({2, 2, 4}, 44);
  auto v = randn({2, 3, 8}, 45);
  res = grad_check(
      [&](Graph& g) {
        return probe_loss(g, ops::concat_channels(g, ops::upsample_nearest2(g, u), v),
                          46);
      },
      {u, v});
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(GradCheck, AddChannelBiasAddMseSum) {
  auto x = randn({2, 3, 4}, 50);
  auto e = randn({2, 3}, 51);
  auto y = randn({2, 3, 4}, 52);
  auto t = randn({2, 3, 4}, 53);
  auto res = grad_check(
      [&](Graph& g) {
        auto h = ops::add(g, ops::add_channel_bias(g, x, e), y);
        return ops::add(g, ops::mse_loss(g, h, t), ops::sum(g, ops::silu(g, y)));
      },
      {x, e, y, t});
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(Backward, LinearityOverSummedLosses) {
  auto x = randn({2, 3, 6}, 60);
  auto w = randn({3, 3, 3}, 61);
  auto b = randn({3}, 62);
  for (auto* t : {&x, &w, &b}) t->set_requires_grad(true);
  auto loss1 = [&](Graph& g) { return probe_loss(g, ops::conv1d(g, x, w, b, 1, 1), 63); };
  auto loss2 = [&](Graph& g) {
    return probe_loss(g, ops::silu(g, ops::conv1d(g, x, w, b, 2, 1)), 64);
  };

  Graph g1;
  auto l1 = loss1(g1);
  g1.backward(l1);
  Graph g2;
  auto l2 = loss2(g2);
  g2.backward(l2);  // accumulates on top of the first backward
  const auto separate = values(Tensor::from({w.numel()}, {w.grad().begin(), w.grad().end()}));

  w.zero_grad();
  x.zero_grad();
  b.zero_grad();
  Graph g3;
  auto l3 = ops::add(g3, loss1(g3), loss2(g3));
  g3.backward(l3);
  for (std::size_t i = 0; i < separate.size(); ++i) {
    EXPECT_NEAR(w.grad()[i], separate[i], 1e-12);
  }
}

TEST(Backward, DeterministicAcrossRepeats) {
  auto run = [] {
    auto x = randn({2, 8, 12}, 70);
    auto w = randn({8, 8, 3}, 71);
    auto b = randn({8}, 72);
    auto gamma = Tensor::full({8}, 1.0);
    auto beta = Tensor::zeros({8});
    for (auto* t : {&x, &w, &b, &gamma, &beta}) t->set_requires_grad(true);
    Graph g;
    auto h = ops::group_norm(g, ops::conv1d(g, x, w, b, 1, 1), 4, gamma, beta);
    auto l = probe_loss(g, ops::silu(g, h), 73);
    g.backward(l);
    std::vector<double> out{l.item()};
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    return out;
  };
  const auto first = run();
  const auto second = run();
  ASSERT_EQ(first.size(), second.size());
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(first[i], second[i]);
}

TEST(Adam, ZeroGradientLeavesParameterAndDecaysMoments) {
  auto p = Tensor::from({2}, {1.0, -2.0});
  p.set_requires_grad(true);
  Adam opt({p});
  p.grad_buffer()[0] = 0.5;
  p.grad_buffer()[1] = -0.5;
  opt.step();
  const double m_before = std::abs(opt.first_moments()[0][0]);
  p.zero_grad();
  opt.step();
  EXPECT_LT(std::abs(opt.first_moments()[0][0]), m_before);
  // Parameter still moves on momentum, but a fresh optimizer with zero
  // gradients never moves it.
  auto q = Tensor::from({2}, {1.0, -2.0});
  q.set_requires_grad(true);
  Adam fresh({q});
  q.grad_buffer();
  fresh.step();
  fresh.step();
  EXPECT_EQ(values(q), (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(fresh.step_count(), 2);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double grad : {3.0, -0.01, 250.0}) {
    auto p = Tensor::from({1}, {0.5});
    p.set_requires_grad(true);
    Adam opt({p});
    p.grad_buffer()[0] = grad;
    opt.step();
    const double delta = p[0] - 0.5;
    EXPECT_NEAR(std::abs(delta), opt.config().learning_rate, 1e-6);
    EXPECT_LT(delta * grad, 0.0);
  }
}

TEST(Adam, ConstantGradientDescendsMonotonically) {
  auto p = Tensor::from({1}, {0.0});
  p.set_requires_grad(true);
  Adam opt({p}, {.learning_rate = 0.1});
  double prev = p[0];
  for (int i = 0; i < 2; ++i) {
    p.zero_grad();
    p.grad_buffer()[0] = 1.7;
    opt.step();
    EXPECT_LT(p[0], prev);
    prev = p[0];
  }
  EXPECT_EQ(opt.step_count(), 2);
}
