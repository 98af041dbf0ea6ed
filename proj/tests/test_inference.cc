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

#include "oracles.h"

#include "quantguard/errors.h"
#include "quantguard/inference.h"

#include <gtest/gtest.h>

#include <cmath>

using namespace quantguard;

TEST(Forward, HandEvaluatedLinear)
{
  ModelGraph g;
  g.input_shape = {2};
  g.layers = {LayerSpec::linear(Tensor({2, 2}, {1, -1, 2, 0.5f}), Tensor({2}, {0.5f, -1})), LayerSpec::relu()};
  const Tensor y = forward(g, Tensor({2, 2}, {1, 2, -1, 4}));
  EXPECT_EQ(y, Tensor({2, 2}, {0.0f, 2.0f, 0.0f, 0.0f}));
}

TEST(Forward, HandEvaluatedConvAndPool)
{
  ModelGraph g;
  g.input_shape = {1, 4, 4};
  std::vector<float> x(16);
  for (std::size_t i = 0; i < 16; ++i)
    x[i] = static_cast<float>(i);
  g.layers = {LayerSpec::conv2d(Tensor({1, 1, 1, 1}, {2.0f}), Tensor({1}, {1.0f}), 1, 0), LayerSpec::max_pool(2, 2),
              LayerSpec::flatten()};
  EXPECT_EQ(forward(g, Tensor({1, 1, 4, 4}, x)), Tensor({1, 4}, {11, 15, 27, 31}));
  g.layers[1] = LayerSpec::avg_pool(2, 2);
  EXPECT_EQ(forward(g, Tensor({1, 1, 4, 4}, x)), Tensor({1, 4}, {6, 10, 22, 26}));
}

TEST(Forward, ResidualAdd)
{
  ModelGraph g;
  g.input_shape = {2};
  g.layers = {LayerSpec::linear(Tensor({2, 2}, {1, 0, 0, 1})), LayerSpec::relu(),
              LayerSpec::linear(Tensor({2, 2}, {2, 0, 0, 2})), LayerSpec::residual_add(1)};
  EXPECT_EQ(forward(g, Tensor({1, 2}, {1, -3})), Tensor({1, 2}, {3, 0}));
}

TEST(Forward, MatchesNaiveEvaluatorOnRandomNetworks)
{
  std::mt19937_64 rng(41);
  for (int t = 0; t < 20; ++t)
  {
    const ModelGraph g = oracle::random_cnn(rng, 4);
    const Tensor batch = oracle::random_tensor({5, 2, 6, 6}, rng);
    const Tensor fast = forward(g, batch);
    const Tensor slow = oracle::naive_forward(g, batch);
    ASSERT_EQ(fast.shape(), slow.shape());
    for (std::size_t i = 0; i < fast.size(); ++i)
      EXPECT_NEAR(fast[i], slow[i], 1e-4f);
  }
}

TEST(Forward, BatchRowsAreIndependent)
{
  std::mt19937_64 rng(42);
  const ModelGraph g = oracle::random_cnn(rng);
  const Tensor batch = oracle::random_tensor({4, 2, 6, 6}, rng);
  const Tensor all = forward(g, batch);
  for (std::size_t n = 0; n < 4; ++n)
  {
    const Tensor one = forward(g, batch.slice(n).reshaped({1, 2, 6, 6}));
    for (std::size_t j = 0; j < all.dim(1); ++j)
      EXPECT_EQ(all.at(n, j), one.at(0, j));
  }
}

TEST(Forward, ShapeErrorsNameTheLayer)
{
  std::mt19937_64 rng(43);
  const ModelGraph g = oracle::random_cnn(rng);
  EXPECT_THROW(forward(g, Tensor({1, 2, 5, 5})), DimensionError);
  ModelGraph bad = g;
  bad.layers.back().weight = oracle::random_tensor({3, 15}, rng);
  try
  {
    forward(bad, Tensor({1, 2, 6, 6}));
    FAIL() << "expected DimensionError";
  }
  catch (const DimensionError &e)
  {
    EXPECT_NE(std::string(e.what()).find("layer 5 (linear)"), std::string::npos) << e.what();
  }
}

TEST(ExecutionModes, NearestEqualsMaterializedGraph)
{
  std::mt19937_64 rng(44);
  const ModelGraph g = oracle::random_cnn(rng);
  const Tensor batch = oracle::random_tensor({3, 2, 6, 6}, rng);
  const ExecutionMode mode = ExecutionMode::nearest(g, 4);
  const ModelGraph q = materialize(g, mode);
  EXPECT_EQ(forward(g, batch, mode), forward(q, batch));
  for (auto i : g.weighted_layers())
  {
    const auto r = quantize_nearest(g.layers[i].weight, make_config(g.layers[i].weight, 4));
    EXPECT_EQ(q.layers[i].weight, r.quantized);
    ASSERT_TRUE(q.layers[i].quant);
    EXPECT_EQ(q.layers[i].quant->strategy, r.state.nearest);
  }
  EXPECT_EQ(forward(q, batch, ExecutionMode::stored(q)), forward(q, batch));
  ExecutionMode relu_mode;
  relu_mode.weights[1] = LayerQuant{};
  EXPECT_THROW(materialize(g, relu_mode), ContractError);
}

TEST(Trace, MatchesNaiveTraceAndCapture)
{
  std::mt19937_64 rng(45);
  const ModelGraph g = oracle::random_cnn(rng);
  const Tensor batch = oracle::random_tensor({3, 2, 6, 6}, rng);
  const std::vector<std::size_t> layers{0, 2, 5};
  const auto captured = capture_activations(g, batch, layers);
  for (std::size_t n = 0; n < 3; ++n)
  {
    const auto outs = trace(g, batch.slice(n));
    const auto naive = oracle::naive_trace(g, batch.slice(n));
    ASSERT_EQ(outs.size(), g.layers.size());
    for (std::size_t l = 0; l < outs.size(); ++l)
      for (std::size_t i = 0; i < outs[l].size(); ++i)
        EXPECT_NEAR(outs[l][i], naive[l][i], 1e-4f);
    EXPECT_EQ(captured[0].slice(n), batch.slice(n));
    EXPECT_EQ(captured[1].slice(n), outs[1]);
    EXPECT_EQ(captured[2].slice(n), outs[4]);
  }
  EXPECT_EQ(capture_activations(g, batch, 2), captured[1]);
  EXPECT_EQ(captured[1].shape(), (Shape{3, 3, 6, 6}));
  EXPECT_THROW(capture_activations(g, batch, 6), ContractError);
}

TEST(Trace, CaptureUsesFullPrecisionWeights)
{
  std::mt19937_64 rng(46);
  const ModelGraph g = oracle::random_mlp(rng, {4, 6, 3});
  const Tensor batch = oracle::random_tensor({2, 4}, rng);
  const Tensor captured = capture_activations(g, batch, 2);
  for (std::size_t n = 0; n < 2; ++n)
    EXPECT_EQ(captured.slice(n), trace(g, batch.slice(n))[1]);
}

TEST(Activations, FakeQuantizeExamples)
{
  const ActivationRange r{0.0f, 2.55f};
  EXPECT_NEAR(fake_quantize_activation(1.0f, r, 8), 1.0f, 1e-6f);
  EXPECT_NEAR(fake_quantize_activation(1.004f, r, 8), 1.0f, 1e-6f);
  EXPECT_NEAR(fake_quantize_activation(5.0f, r, 8), 2.55f, 1e-6f);
  EXPECT_NEAR(fake_quantize_activation(-1.0f, r, 8), 0.0f, 1e-6f);
  const ActivationRange sym{-1.0f, 1.0f};
  EXPECT_NEAR(fake_quantize_activation(0.0f, sym, 8), 0.0f, 1e-7f);
}

TEST(Activations, ErrorBoundedByHalfStepInsideRange)
{
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<float> u(-3.0f, 5.0f);
  for (int bits : {4, 8})
  {
    const ActivationRange r{-3.0f, 5.0f};
    const double step = 8.0 / (std::ldexp(1.0, bits) - 1.0);
    for (int i = 0; i < 10000; ++i)
    {
      const float x = u(rng);
      ASSERT_LE(std::fabs(fake_quantize_activation(x, r, bits) - x), step / 2.0 + 1e-5) << x;
    }
  }
}

TEST(Activations, CalibrationExamples)
{
  ModelGraph g;
  g.input_shape = {2};
  g.layers = {LayerSpec::linear(Tensor({1, 2}, {1, 1})), LayerSpec::relu()};
  const auto ranges = calibrate_activation_ranges(g, Tensor({3, 2}, {1, 2, -5, 1, 0.5f, 0.5f}));
  ASSERT_EQ(ranges.size(), 2u);
  EXPECT_EQ(ranges[0], (ActivationRange{-4.0f, 3.0f}));
  EXPECT_EQ(ranges[1], (ActivationRange{0.0f, 3.0f}));

  const auto flat = calibrate_activation_ranges(g, Tensor({1, 2}, {1, 1}));
  EXPECT_EQ(flat[0].min, 2.0f);
  EXPECT_FLOAT_EQ(flat[0].max, 2.0f + 1e-6f);

  try
  {
    calibrate_activation_ranges(g, Tensor({0, 2}));
    FAIL() << "expected calibration error";
  }
  catch (const Error &e)
  {
    EXPECT_EQ(e.kind(), "calibration");
    EXPECT_EQ(e.code(), ExitCode::kBadInput);
  }
}

TEST(Activations, QuantizedForwardStaysNearFullPrecision)
{
  std::mt19937_64 rng(48);
  const ModelGraph g = oracle::random_cnn(rng);
  const Tensor batch = oracle::random_tensor({8, 2, 6, 6}, rng);
  ExecutionMode mode;
  mode.activations = ActivationQuantization{8, calibrate_activation_ranges(g, batch)};
  const Tensor fp = forward(g, batch);
  const Tensor q = forward(g, batch, mode);
  for (std::size_t i = 0; i < fp.size(); ++i)
    EXPECT_NEAR(q[i], fp[i], 0.1f);
  mode.activations->ranges.pop_back();
  EXPECT_THROW(forward(g, batch, mode), ContractError);
}

TEST(Argmax, FirstMaximumWins)
{
  EXPECT_EQ(argmax_rows(Tensor({2, 3}, {1, 3, 3, 0, -1, -2})), (std::vector<std::size_t>{1, 0}));
  EXPECT_THROW(argmax_rows(Tensor({3})), DimensionError);
}
