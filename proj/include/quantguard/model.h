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

#ifndef QUANTGUARD_MODEL_H
#define QUANTGUARD_MODEL_H

#include "quantguard/quantizer.h"
#include "quantguard/tensor.h"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace quantguard
{

enum class LayerKind
{
  kLinear,
  kConv2d,
  kRelu,
  kMaxPool,
  kAvgPool,
  kFlatten,
  kResidualAdd,
};

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string &name);

// Quantization applied to a weighted layer: its config and the rounding strategy used.
struct LayerQuant
{
  QuantConfig config;
  Strategy strategy;

  bool operator==(const LayerQuant &) const = default;
};

/**
 * One layer of a sequential graph. Fields that do not apply to `kind` stay zero.
 *
 * linear:       weight[out, in], optional bias[out]
 * conv2d:       weight[C_out, C_in, k, k], optional bias[C_out], stride, padding
 * max/avgpool:  kernel, stride (no padding)
 * residual_add: adds the output of layer `source` to the current tensor
 */
struct LayerSpec
{
  LayerKind kind = LayerKind::kRelu;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t source = 0;
  Tensor weight;
  std::optional<Tensor> bias;
  std::optional<LayerQuant> quant;

  bool is_weighted() const { return kind == LayerKind::kLinear || kind == LayerKind::kConv2d; }

  static LayerSpec linear(Tensor weight, std::optional<Tensor> bias = std::nullopt);
  static LayerSpec conv2d(Tensor weight, std::optional<Tensor> bias, std::size_t stride, std::size_t padding);
  static LayerSpec relu();
  static LayerSpec max_pool(std::size_t kernel, std::size_t stride);
  static LayerSpec avg_pool(std::size_t kernel, std::size_t stride);
  static LayerSpec flatten();
  static LayerSpec residual_add(std::size_t source);

  bool operator==(const LayerSpec &) const = default;
};

// Asymmetric min-max range of one layer output.
struct ActivationRange
{
  float min = 0.0f;
  float max = 0.0f;

  bool operator==(const ActivationRange &) const = default;
};

// How a quantized graph was produced; enough to reproduce the weights.
struct QuantRecord
{
  std::string method;
  int bits = 8;
  std::uint64_t seed = 0;

  bool operator==(const QuantRecord &) const = default;
};

struct ModelGraph
{
  Shape input_shape; // per-sample shape, e.g. {16} or {C, H, W}
  std::vector<LayerSpec> layers;
  std::optional<QuantRecord> record;
  int activation_bits = 0; // 0: activations stay full precision
  std::vector<ActivationRange> activation_ranges;

  std::vector<std::size_t> weighted_layers() const;

  bool operator==(const ModelGraph &) const = default;
};

/**
 * Per-sample output shapes of every layer (index i is the output of layer i).
 * Throws DimensionError naming the offending layer.
 */
std::vector<Shape> infer_shapes(const ModelGraph &graph);

// Full structural validation: shapes, residual sources, bias sizes, finite weights, quant metadata.
void validate(const ModelGraph &graph);

struct Dataset
{
  Tensor samples; // [N, ...]
  std::optional<std::vector<std::int32_t>> labels;
  std::optional<std::int32_t> trigger_target;
  std::int32_t num_classes = 0; // 0 when unknown (unlabelled sets)

  std::size_t size() const { return samples.rank() == 0 ? 0 : samples.dim(0); }
  Shape sample_shape() const;

  bool operator==(const Dataset &) const = default;
};

void validate(const Dataset &data);

// Rows [first, first + count) as a new dataset (labels carried along).
Dataset take(const Dataset &data, std::size_t first, std::size_t count);

} // namespace quantguard

#endif // QUANTGUARD_MODEL_H
