/*
 * Copyright 2026 The QuantGuard Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "checks.h"
#include "oracles.h"

#include "quantguard/efrap.h"
#include "quantguard/errors.h"
#include "quantguard/inference.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace quantguard;

namespace
{

EfrapConfig short_config(std::size_t iterations)
{
  EfrapConfig cfg;
  cfg.iterations = iterations;
  cfg.seed = 7;
  return cfg;
}

} // namespace

TEST(LossFlip, Examples)
{
  const auto single = loss_flip(std::vector<double>{0.4}, std::vector<double>{0.9}, Strategy{1}, 1e-7);
  EXPECT_NEAR(single.value, 0.4 * -std::log(0.9), 1e-12);
  EXPECT_NEAR(single.value, 0.042144, 1e-6);
  EXPECT_NEAR(single.grad[0], -0.4 / 0.9, 1e-12);

  const auto matched = loss_flip(std::vector<double>{0.3, 0.2}, std::vector<double>{1.0, 0.0}, Strategy{1, 0}, 1e-7);
  EXPECT_NEAR(matched.value, 0.5 * -std::log(1.0 - 1e-7), 1e-12);
  EXPECT_EQ(matched.grad, (std::vector<double>{0.0, 0.0}));

  const auto zero = loss_flip(std::vector<double>{0.0, 0.0}, std::vector<double>{0.3, 0.8}, Strategy{1, 0}, 1e-7);
  EXPECT_EQ(zero.value, 0.0);
  EXPECT_EQ(zero.grad, (std::vector<double>{0.0, 0.0}));

  EXPECT_THROW(loss_flip(std::vector<double>{0.1}, std::vector<double>{0.1, 0.2}, Strategy{1}, 1e-7), DimensionError);
}

TEST(LossPenalty, Examples)
{
  const auto lv = loss_penalty(std::vector<double>{0.5, 0.0, 1.0, 0.25});
  EXPECT_DOUBLE_EQ(lv.value, 1.0 + 0.0 + 0.0 + 0.75);
  EXPECT_EQ(lv.grad, (std::vector<double>{0.0, 4.0, -4.0, 2.0}));
}

TEST(LossActivation, Examples)
{
  const LayerSpec layer = LayerSpec::linear(Tensor({1, 1}, {1.2f}));
  const QuantConfig cfg = QuantConfig::symmetric(8, 0.5f);
  const auto lv = loss_activation(layer, cfg, Tensor({1, 1}, {2.0f}), std::vector<double>{1.0});
  EXPECT_NEAR(lv.value, 0.36, 1e-6);

  std::mt19937_64 rng(51);
  const LayerSpec conv = LayerSpec::conv2d(oracle::random_tensor({2, 2, 3, 3}, rng), std::nullopt, 1, 1);
  const QuantConfig ccfg = make_config(conv.weight, 4);
  const auto st = quantize_nearest(conv.weight, ccfg).state;
  const Tensor x = oracle::random_tensor({3, 2, 4, 4}, rng);
  EXPECT_NEAR(loss_activation(conv, ccfg, x, st.soft).value, 0.0, 1e-10);

  const auto zero = loss_activation(conv, ccfg, Tensor({2, 2, 4, 4}), std::vector<double>(conv.weight.size(), 0.3));
  EXPECT_EQ(zero.value, 0.0);
  for (double g : zero.grad)
    EXPECT_EQ(g, 0.0);

  EXPECT_THROW(loss_activation(conv, ccfg, Tensor({2, 3, 4, 4}), st.soft), DimensionError);
  EXPECT_THROW(loss_activation(layer, cfg, Tensor({1, 2}), std::vector<double>{1.0}), DimensionError);
}

TEST(LossActivation, MatchesDirectEvaluation)
{
  std::mt19937_64 rng(52);
  for (int t = 0; t < 20; ++t)
  {
    const LayerSpec layer = t % 2 ? LayerSpec::conv2d(oracle::random_tensor({3, 2, 3, 3}, rng), std::nullopt, 2, 1)
                                  : LayerSpec::linear(oracle::random_tensor({5, 4}, rng));
    const Tensor x = t % 2 ? oracle::random_tensor({4, 2, 7, 7}, rng) : oracle::random_tensor({6, 4}, rng);
    const QuantConfig cfg = make_config(layer.weight, 4);
    const auto c = check::random_soft(layer.weight.size(), rng, 0.0, 1.0);
    const double expected = check::activation_loss_value(layer, cfg, x, c);
    EXPECT_NEAR(loss_activation(layer, cfg, x, c).value, expected, 1e-9 * std::max(1.0, expected));
  }
}

TEST(LossActivation, BatchSubsetsAddUp)
{
  std::mt19937_64 rng(53);
  const LayerSpec layer = LayerSpec::linear(oracle::random_tensor({3, 4}, rng));
  const Tensor x = oracle::random_tensor({6, 4}, rng);
  const ActivationProblem problem(layer, make_config(layer.weight, 4), x);
  const auto c = check::random_soft(layer.weight.size(), rng, 0.0, 1.0);
  const std::vector<std::size_t> a{0, 2, 4}, b{1, 3, 5};
  EXPECT_NEAR(problem.evaluate(c, a).value + problem.evaluate(c, b).value, problem.evaluate(c).value, 1e-12);
  const std::vector<std::size_t> bad{6};
  EXPECT_THROW(problem.evaluate(c, bad), DimensionError);
}

TEST(Gradients, FlipMatchesFiniteDifferences)
{
  const auto r = check::flip_gradient_suite(100, 54);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(Gradients, ActivationMatchesFiniteDifferences)
{
  const auto r = check::activation_gradient_suite(100, 55);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(Gradients, PenaltyMatchesFiniteDifferences)
{
  const auto r = check::penalty_gradient_suite(100, 56);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(Gradients, ActivationIsZeroAtClipSaturation)
{
  // W/s = 7 exactly at 4 bits: floor is 7, any C > 0 saturates at the upper clip.
  const LayerSpec layer = LayerSpec::linear(Tensor({1, 1}, {7.0f}));
  const auto lv = loss_activation(layer, QuantConfig::symmetric(4, 1.0f), Tensor({1, 1}, {1.0f}),
                                  std::vector<double>{0.6});
  EXPECT_EQ(lv.value, 0.0);
  EXPECT_EQ(lv.grad[0], 0.0);
}

TEST(OptimizeLayer, ZeroIterationsKeepsNearest)
{
  std::mt19937_64 rng(57);
  const LayerSpec layer = LayerSpec::linear(oracle::random_tensor({6, 5}, rng));
  const QuantConfig cfg = make_config(layer.weight, 4);
  const auto r = optimize_layer(layer, cfg, oracle::random_tensor({8, 5}, rng), short_config(0));
  EXPECT_EQ(r.state.learned, r.state.nearest);
  EXPECT_EQ(r.iterations_run, 0u);
  EXPECT_TRUE(r.trace.empty());
}

TEST(OptimizeLayer, UnopposedFlipLossReachesFlippedStrategy)
{
  std::mt19937_64 rng(58);
  const LayerSpec layer = LayerSpec::linear(oracle::random_tensor({8, 8}, rng));
  const QuantConfig cfg = make_config(layer.weight, 4);
  EfrapConfig e = short_config(2000);
  e.lambda_a = 0.0;
  e.lambda_p = 0.0;
  const auto r = optimize_layer(layer, cfg, oracle::random_tensor({4, 8}, rng), e);
  for (std::size_t i = 0; i < r.state.learned.size(); ++i)
  {
    if (r.state.error[i] > 0.0)
    {
      EXPECT_EQ(r.state.learned[i], r.state.flipped[i]) << i;
    }
  }
}

TEST(OptimizeLayer, ScalarProblemMatchesGridSearch)
{
  // W = 1.2, s = 0.5: floor 2, frac 0.4, nearest rounds down, E = 0.2.
  const float w = 1.2f, s = 0.5f, x = 2.0f;
  const LayerSpec layer = LayerSpec::linear(Tensor({1, 1}, {w}));
  const QuantConfig cfg = QuantConfig::symmetric(8, s);
  EfrapConfig e = short_config(10000);
  e.lambda_p = 0.0;
  const auto r = optimize_layer(layer, cfg, Tensor({1, 1}, {x}), e);

  const auto st = quantize_nearest(Tensor({1}, {w}), cfg).state;
  auto objective = [&](double c) {
    const std::vector<double> cv{c};
    return check::flip_loss_value(st.error, cv, st.flipped, 1e-7) +
           check::activation_loss_value(layer, cfg, Tensor({1, 1}, {x}), cv);
  };
  double best = 0.0, best_value = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 100000; ++k)
  {
    const double c = k / 100000.0;
    const double v = objective(c);
    if (v < best_value)
    {
      best_value = v;
      best = c;
    }
  }
  EXPECT_GT(best, 0.5);
  EXPECT_LT(best, 0.7);
  EXPECT_NEAR(r.state.soft[0], best, 1e-3);
}

TEST(OptimizeLayer, SoftVariablesStayInUnitInterval)
{
  std::mt19937_64 rng(59);
  const LayerSpec layer = LayerSpec::conv2d(oracle::random_tensor({3, 2, 3, 3}, rng), std::nullopt, 1, 1);
  EfrapConfig e = short_config(0);
  e.learning_rate = 0.05;
  const QuantConfig cfg = make_config(layer.weight, 4);
  const Tensor x = oracle::random_tensor({10, 2, 5, 5}, rng);
  for (std::size_t iters : {1u, 7u, 50u, 300u})
  {
    e.iterations = iters;
    const auto r = optimize_layer(layer, cfg, x, e);
    for (double c : r.state.soft)
    {
      ASSERT_GE(c, 0.0);
      ASSERT_LE(c, 1.0);
    }
  }
}

TEST(OptimizeLayer, ThresholdConsistency)
{
  std::mt19937_64 rng(60);
  const LayerSpec layer = LayerSpec::linear(oracle::random_tensor({10, 6}, rng));
  const QuantConfig cfg = make_config(layer.weight, 4);
  const auto r = optimize_layer(layer, cfg, oracle::random_tensor({16, 6}, rng), short_config(500));
  EXPECT_EQ(r.state.learned, threshold_strategy(r.state.soft));
  std::vector<double> rounded(r.state.soft.size());
  for (std::size_t i = 0; i < rounded.size(); ++i)
    rounded[i] = r.state.soft[i] >= 0.5 ? 1.0 : 0.0;
  EXPECT_EQ(quantize_with_strategy(layer.weight, cfg, r.state.learned), soft_quantize(layer.weight, cfg, rounded));
}

TEST(OptimizeLayer, DeterministicUnderSeed)
{
  std::mt19937_64 rng(61);
  const LayerSpec layer = LayerSpec::linear(oracle::random_tensor({10, 6}, rng));
  const QuantConfig cfg = make_config(layer.weight, 4);
  const Tensor x = oracle::random_tensor({70, 6}, rng);
  const auto a = optimize_layer(layer, cfg, x, short_config(300));
  const auto b = optimize_layer(layer, cfg, x, short_config(300));
  EXPECT_EQ(a.state.soft, b.state.soft);
  EXPECT_EQ(a.state.learned, b.state.learned);
  EfrapConfig other = short_config(300);
  other.seed = 8;
  EXPECT_NE(optimize_layer(layer, cfg, x, other).state.soft, a.state.soft);
}

TEST(OptimizeLayer, TraceSchedule)
{
  std::mt19937_64 rng(62);
  const LayerSpec layer = LayerSpec::linear(oracle::random_tensor({3, 3}, rng));
  EfrapConfig e = short_config(250);
  const auto r = optimize_layer(layer, make_config(layer.weight, 8), oracle::random_tensor({4, 3}, rng), e);
  std::vector<std::size_t> iters;
  for (const auto &tp : r.trace)
  {
    iters.push_back(tp.iteration);
    EXPECT_NEAR(tp.total, tp.flip + tp.activation + tp.penalty, 1e-12);
  }
  EXPECT_EQ(iters, (std::vector<std::size_t>{1, 100, 200, 250}));
}

TEST(OptimizeLayer, EarlyStopEndsBeforeBudget)
{
  std::mt19937_64 rng(63);
  const LayerSpec layer = LayerSpec::linear(oracle::random_tensor({4, 4}, rng));
  EfrapConfig e = short_config(10000);
  e.early_stop = true;
  e.learning_rate = 0.01;
  const auto r = optimize_layer(layer, make_config(layer.weight, 4), oracle::random_tensor({4, 4}, rng), e);
  EXPECT_LT(r.iterations_run, 10000u);
  EXPECT_GE(r.converged_fraction(), 0.99);
}

TEST(OptimizeLayer, NanInputDiverges)
{
  const LayerSpec layer = LayerSpec::linear(Tensor({1, 2}, {0.3f, -0.6f}));
  Tensor x({2, 2}, {1.0f, 2.0f, std::numeric_limits<float>::quiet_NaN(), 1.0f});
  try
  {
    optimize_layer(layer, make_config(layer.weight, 8), x, short_config(5));
    FAIL() << "expected divergence";
  }
  catch (const NumericError &e)
  {
    EXPECT_EQ(e.kind(), "diverged");
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
  }
}

TEST(EfrapConfig, Validation)
{
  EfrapConfig e;
  e.lambda_a = -1.0;
  EXPECT_THROW(e.validate(), ContractError);
  e = {};
  e.learning_rate = 0.0;
  EXPECT_THROW(e.validate(), ContractError);
  e = {};
  e.batch_size = 0;
  EXPECT_THROW(e.validate(), ContractError);
  e = {};
  EXPECT_NO_THROW(e.validate());
}

TEST(EfrapQuantize, ZeroIterationsEqualsNearestGraph)
{
  std::mt19937_64 rng(64);
  const ModelGraph g = oracle::random_cnn(rng);
  EfrapConfig e = short_config(0);
  e.lambda_f = e.lambda_a = e.lambda_p = 0.0;
  const auto r = efrap_quantize(g, oracle::random_tensor({4, 2, 6, 6}, rng), 4, e);
  const ModelGraph nearest = materialize(g, ExecutionMode::nearest(g, 4));
  ASSERT_EQ(r.graph.layers.size(), nearest.layers.size());
  for (std::size_t i = 0; i < g.layers.size(); ++i)
  {
    EXPECT_EQ(r.graph.layers[i].weight, nearest.layers[i].weight) << i;
    EXPECT_EQ(r.graph.layers[i].quant, nearest.layers[i].quant) << i;
  }
  ASSERT_TRUE(r.graph.record);
  EXPECT_EQ(r.graph.record->method, "efrap");
  EXPECT_EQ(r.graph.record->bits, 4);
  EXPECT_EQ(r.layers.size(), 3u);
}

TEST(EfrapQuantize, ParallelMatchesSequential)
{
  std::mt19937_64 rng(65);
  const ModelGraph g = oracle::random_cnn(rng);
  const Tensor calib = oracle::random_tensor({40, 2, 6, 6}, rng);
  EfrapConfig e = short_config(200);
  const auto seq = efrap_quantize(g, calib, 4, e);
  e.parallel_layers = true;
  e.threads = 3;
  const auto par = efrap_quantize(g, calib, 4, e);
  EXPECT_EQ(seq.graph, par.graph);
  for (std::size_t l = 0; l < seq.layers.size(); ++l)
    EXPECT_EQ(seq.layers[l].state.soft, par.layers[l].state.soft);
}

TEST(EfrapQuantize, LeavesUnweightedLayersAlone)
{
  std::mt19937_64 rng(66);
  const ModelGraph g = oracle::random_cnn(rng);
  const auto r = efrap_quantize(g, oracle::random_tensor({8, 2, 6, 6}, rng), 8, short_config(50));
  for (std::size_t i = 0; i < g.layers.size(); ++i)
  {
    EXPECT_EQ(r.graph.layers[i].kind, g.layers[i].kind);
    EXPECT_EQ(r.graph.layers[i].bias, g.layers[i].bias);
    if (!g.layers[i].is_weighted())
    {
      EXPECT_EQ(r.graph.layers[i], g.layers[i]);
    }
  }
  EXPECT_THROW(efrap_quantize(g, Tensor({0, 2, 6, 6}), 8, short_config(5)), Error);
}

TEST(EfrapQuantize, ActivationOnlyObjectiveDoesNotWorsenLayerError)
{
  std::mt19937_64 rng(67);
  const ModelGraph g = oracle::random_mlp(rng, {8, 12, 10, 4});
  const Tensor calib = oracle::random_tensor({64, 8}, rng);
  EfrapConfig e = short_config(3000);
  e.lambda_f = 0.0;
  e.lambda_a = 10.0;
  const auto r = efrap_quantize(g, calib, 4, e);
  const auto inputs = capture_activations(g, calib, g.weighted_layers());
  std::size_t k = 0;
  for (auto i : g.weighted_layers())
  {
    const auto &layer = g.layers[i];
    const QuantConfig cfg = r.layers[k].config;
    const auto st = quantize_nearest(layer.weight, cfg).state;
    std::vector<double> nearest(st.nearest.begin(), st.nearest.end());
    std::vector<double> learned(r.layers[k].state.learned.begin(), r.layers[k].state.learned.end());
    EXPECT_LE(check::activation_loss_value(layer, cfg, inputs[k], learned),
              check::activation_loss_value(layer, cfg, inputs[k], nearest))
      << "layer " << i;
    ++k;
  }
}
