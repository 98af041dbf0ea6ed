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

#ifndef QUANTGUARD_EFRAP_H
#define QUANTGUARD_EFRAP_H

#include "quantguard/model.h"

#include <cstdint>
#include <span>
#include <vector>

namespace quantguard
{

struct EfrapConfig
{
  double lambda_f = 1.0; // weight of the flip loss; 0 disables it
  double lambda_a = 1.0;
  double lambda_p = 1.0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t iterations = 10000;
  double ce_epsilon = 1e-7;
  std::uint64_t seed = 0;
  ScaleScheme scheme = ScaleScheme::kSymmetricMaxAbs;
  bool early_stop = false;    // stop when the loss moves < 1e-6 (relative) over 100 iterations
  std::size_t trace_every = 100;
  bool parallel_layers = false;
  std::size_t threads = 0;    // 0: hardware concurrency

  // Throws ContractError on negative weights, non-positive step size or batch size.
  void validate() const;
};

struct LossValue
{
  double value = 0.0;
  std::vector<double> grad;
};

/**
 * @brief Error-weighted cross-entropy towards the flipped strategy.
 *
 * value = sum E * D(C, target) with D(c, t) = -t ln c' - (1 - t) ln(1 - c'),
 * c' = clamp(c, eps, 1 - eps). The gradient is zero where the clamp binds.
 */
LossValue loss_flip(std::span<const double> error, std::span<const double> soft, std::span<const std::uint8_t> target,
                    double ce_epsilon);

// sum -4 (C - 1/2)^2 + 1, gradient -8 (C - 1/2).
LossValue loss_penalty(std::span<const double> soft);

/**
 * @brief Activation-preservation term for one weighted layer.
 *
 * Holds the layer inputs lowered to columns (one column per output position)
 * so that value = sum over samples and outputs of (W x - soft_quantize(W, C) x)^2.
 */
class ActivationProblem
{
public:
  // `inputs` is the captured layer input batch [N, input_shape...].
  ActivationProblem(const LayerSpec &layer, const QuantConfig &cfg, const Tensor &inputs);

  std::size_t samples() const { return _samples; }

  // Loss and gradient over the listed samples (all samples when empty).
  LossValue evaluate(std::span<const double> soft, std::span<const std::size_t> batch = {}) const;

private:
  QuantConfig _cfg;
  std::size_t _rows = 0;     // output channels / features
  std::size_t _features = 0; // inputs per output (C_in * k * k for conv)
  std::size_t _columns = 0;  // output positions per sample
  std::size_t _samples = 0;
  std::vector<double> _weight;
  std::vector<double> _floor;
  std::vector<double> _x; // [sample][column][feature]
};

LossValue loss_activation(const LayerSpec &layer, const QuantConfig &cfg, const Tensor &inputs,
                          std::span<const double> soft);

struct TracePoint
{
  std::size_t iteration = 0;
  double total = 0.0;
  double flip = 0.0;
  double activation = 0.0;
  double penalty = 0.0;
};

struct LayerResult
{
  std::size_t layer = 0;
  QuantConfig config;
  RoundingState state; // `learned` and `soft` hold the final values
  std::vector<TracePoint> trace;
  std::size_t iterations_run = 0;

  // Fraction of soft variables in [0, 0.01] or [0.99, 1].
  double converged_fraction() const;
};

/**
 * Learns the rounding strategy of one layer. `inputs` are the layer inputs
 * propagated with full-precision weights; `layer_index` only salts the seed.
 * Throws NumericError("diverged") when the loss becomes NaN.
 */
LayerResult optimize_layer(const LayerSpec &layer, const QuantConfig &cfg, const Tensor &inputs,
                           const EfrapConfig &efrap, std::size_t layer_index = 0);

struct EfrapResult
{
  ModelGraph graph;
  std::vector<LayerResult> layers;
};

// Quantizes every weighted layer of `graph` with its learned strategy.
EfrapResult efrap_quantize(const ModelGraph &graph, const Tensor &calibration, int bits, const EfrapConfig &efrap);

} // namespace quantguard

#endif // QUANTGUARD_EFRAP_H
