// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gradcheck.hpp"
#include "ndif/adam.hpp"
#include "ndif/ops.hpp"
#include "ndif/unet.hpp"

using namespace ndif;

namespace {

UNetConfig small_config(std::size_t L = 32) {
  UNetConfig c;
  c.base_channels = 8;
  c.time_embed_dim = 16;
  c.grid_length = L;
  return c;
}

// Closed-form count for the residual U-Net, derived from the block recipe:
// norm(2c_in) + conv(3 c_in c_out + c_out) + time(T c_out + c_out)
// + norm(2c_out) + conv(3 c_out^2 + c_out) [+ 1x1 skip c_in c_out + c_out].
std::size_t expected_param_count(const UNetConfig& c) {
  auto block = [&](std::size_t i, std::size_t o) {
    std::size_t n = 2 * i + 3 * i * o + o + c.time_embed_dim * o + o + 2 * o +
                    3 * o * o + o;
    if (i != o) n += i * o + o;
    return n;
  };
  const std::size_t T = c.time_embed_dim, c0 = c.channels_at(0);
  const std::size_t levels = c.channel_mults.size();
  std::size_t n = 2 * (T * T + T) + (3 * c0 + c0) + 2 * c0 + (3 * c0 + 1);
  std::size_t prev = c0;
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t ch = c.channels_at(l);
    n += block(prev, ch) + (c.res_blocks_per_level - 1) * block(ch, ch);
    if (l + 1 < levels) n += 3 * ch * ch + ch;
    prev = ch;
  }
  n += block(prev, prev);
  for (std::size_t l = levels; l-- > 0;) {
    const std::size_t ch = c.channels_at(l);
    if (l + 1 < levels) n += 3 * prev * ch + ch;
    n += block(2 * ch, ch) + (c.res_blocks_per_level - 1) * block(ch, ch);
    prev = ch;
  }
  return n;
}

Tensor input(std::size_t B, std::size_t L, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor::randn({B, 1, L}, rng);
}

}  // namespace

TEST(TimeEmbedding, ZeroStep) {
  auto e = time_embedding(0, 8);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(e[2 * k], 0.0);
    EXPECT_EQ(e[2 * k + 1], 1.0);
  }
  EXPECT_THROW(time_embedding(3, 7), ConfigError);
}

TEST(TimeEmbedding, FormulaAtDimFour) {
  auto e = time_embedding(1, 4);
  EXPECT_DOUBLE_EQ(e[0], std::sin(1.0));
  EXPECT_DOUBLE_EQ(e[1], std::cos(1.0));
  EXPECT_DOUBLE_EQ(e[2], std::sin(0.01));
  EXPECT_DOUBLE_EQ(e[3], std::cos(0.01));
}

TEST(TimeEmbedding, DistinctAcrossSteps) {
  std::vector<std::vector<double>> all;
  for (int t = 1; t <= 50; ++t) all.push_back(time_embedding(t, 128));
  for (std::size_t a = 0; a < all.size(); ++a)
    for (std::size_t b = a + 1; b < all.size(); ++b) {
      double d = 0.0;
      for (std::size_t k = 0; k < 128; ++k) d += std::pow(all[a][k] - all[b][k], 2);
      EXPECT_GT(d, 0.0);
    }
}

TEST(UNetConfig, Validation) {
  UNetConfig c;
  EXPECT_NO_THROW(c.validate());
  c.base_channels = 12;
  EXPECT_THROW(c.validate(), ConfigError);
  c = UNetConfig{};
  c.grid_length = 170;
  EXPECT_THROW(c.validate(), ConfigError);
  c = UNetConfig{};
  c.time_embed_dim = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(UNet, ParameterCountMatchesFormula) {
  for (auto cfg : {UNetConfig{}, small_config()}) {
    UNet net(cfg, 1);
    EXPECT_EQ(net.params().scalar_count(), expected_param_count(cfg));
  }
  UNetConfig two_level = small_config(64);
  two_level.channel_mults = {1, 3};
  two_level.res_blocks_per_level = 1;
  EXPECT_EQ(UNet(two_level, 1).params().scalar_count(),
            expected_param_count(two_level));
}

TEST(UNet, ShapePreservation) {
  for (std::size_t L : {168, 64}) {
    UNetConfig cfg;
    cfg.grid_length = L;
    UNet net(cfg, 3);
    for (std::size_t B : {1, 4}) {
      Graph g = Graph::inference();
      std::vector<int> steps(B, 7);
      auto y = net.predict_noise(g, input(B, L, 4), steps);
      EXPECT_EQ(y.shape(), (Shape{B, 1, L}));
    }
  }
}

TEST(UNet, LengthMismatch) {
  UNet net(small_config(), 1);
  Graph g = Graph::inference();
  std::vector<int> steps{1};
  EXPECT_THROW(net.predict_noise(g, input(1, 64, 1), steps), ShapeError);
  EXPECT_THROW(net.check_length(64), ConfigError);
}

TEST(UNet, FreshNetworkPredictsZero) {
  UNet net(small_config(), 2);
  Graph g = Graph::inference();
  std::vector<int> steps{3, 40};
  auto y = net.predict_noise(g, input(2, 32, 5), steps);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(UNet, ZeroWeightsLeaveOnlyOutputBias) {
  UNet net(UNetConfig{}, 7);
  for (const auto& name : net.params().names()) {
    auto d = net.params().at(name).mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
  net.params().at("out_conv.bias").mutable_data()[0] = 0.37;
  Graph g = Graph::inference();
  std::vector<int> steps{1, 25, 50};
  auto y = net.predict_noise(g, input(3, 168, 8), steps);
  for (double v : y.data()) EXPECT_EQ(v, 0.37);
}

TEST(UNet, RebuildFromParamStore) {
  UNet net(small_config(), 9);
  UNet copy(small_config(), net.params());
  EXPECT_EQ(copy.params().size(), net.params().size());
  EXPECT_EQ(copy.params().names(), net.params().names());
  ParamStore partial;
  partial.add("in_conv.weight", Tensor::zeros({8, 1, 3}));
  EXPECT_THROW(UNet(small_config(), partial), ShapeError);
}

TEST(UNet, GradientMatchesFiniteDifferences) {
  UNet net(small_config(), 21);
  // Wake the zero-initialised output head so every path carries gradient.
  std::mt19937_64 rng(22);
  for (auto name : {"out_conv.weight", "out_conv.bias"}) {
    auto d = net.params().at(name).mutable_data();
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto& v : d) v = n(rng);
  }
  const Tensor x = input(2, 32, 23);
  const Tensor target = input(2, 32, 24);
  const std::vector<int> steps{4, 37};
  auto loss = [&](Graph& g) {
    return ops::mse_loss(g, net.predict_noise(g, x, steps), target);
  };

  // Ten random scalars drawn across the whole parameter set.
  auto all = net.params().tensors();
  std::shuffle(all.begin(), all.end(), rng);
  std::vector<Tensor> picked(all.begin(), all.begin() + 10);
  auto res = ndif::testing::grad_check(loss, picked, 1e-5, 1, 25);
  EXPECT_EQ(res.checked, 10u);
  EXPECT_LT(res.max_rel_error, 1e-4);

  // And a sweep touching every tensor once, plus the input itself.
  auto every = net.params().tensors();
  res = ndif::testing::grad_check(loss, every, 1e-5, 1, 26);
  EXPECT_EQ(res.checked, every.size());
  EXPECT_LT(res.max_rel_error, 1e-4);
  Tensor xin = x;
  auto in_loss = [&](Graph& g) {
    return ops::mse_loss(g, net.predict_noise(g, xin, steps), target);
  };
  res = ndif::testing::grad_check(in_loss, {xin}, 1e-5, 8, 27);
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(UNet, TrainingStepsReduceLossAndStayFinite) {
  UNet net(small_config(), 31);
  const auto schedule = NoiseSchedule::linear(ScheduleConfig{});
  Adam opt(net.params().tensors(), {.learning_rate = 2e-3});
  std::vector<double> xs(32);
  for (std::size_t i = 0; i < 32; ++i) xs[i] = 0.8 * std::cos(0.2 * i);
  std::vector<double> batch;
  for (int r = 0; r < 8; ++r) batch.insert(batch.end(), xs.begin(), xs.end());
  const Tensor x0 = Tensor::from({8, 1, 32}, batch);

  auto eval = [&] {
    std::mt19937_64 rng(77);
    double total = 0.0;
    for (int k = 0; k < 4; ++k) {
      Graph g = Graph::inference();
      total += training_loss(g, net, x0, schedule, rng).item();
    }
    return total / 4;
  };
  const double before = eval();
  std::mt19937_64 rng(32);
  for (int step = 0; step < 60; ++step) {
    opt.zero_grad();
    Graph g;
    auto l = training_loss(g, net, x0, schedule, rng);
    g.backward(l);
    opt.step();
    ASSERT_TRUE(net.params().all_finite()) << "step " << step;
  }
  EXPECT_LT(eval(), 0.8 * before);
}

TEST(UNet, RepeatedForwardIsBitwiseStable) {
  // Interleaved allocations shift heap addresses between calls; outputs must
  // not depend on them.
  UNet net(small_config(168), 41);
  auto& w = net.params().at("out_conv.weight");
  std::mt19937_64 rng(42);
  for (auto& v : w.mutable_data()) v = 0.1 * std::normal_distribution<double>()(rng);
  const Tensor x = input(4, 168, 43);
  const std::vector<int> steps{50, 50, 3, 17};
  Graph g0 = Graph::inference();
  const Tensor first = net.predict_noise(g0, x, steps);
  std::vector<std::vector<double>> ballast;
  for (int r = 0; r < 6; ++r) {
    ballast.emplace_back(17 + 3 * r);
    Graph g = Graph::inference();
    const Tensor again = net.predict_noise(g, x.detach(), steps);
    for (std::size_t i = 0; i < first.numel(); ++i) ASSERT_EQ(first[i], again[i]);
  }
}
