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

#include "quantguard/model.h"

#include "quantguard/errors.h"

namespace quantguard
{

std::string to_string(LayerKind kind)
{
  switch (kind)
  {
    case LayerKind::kLinear:
      return "linear";
    case LayerKind::kConv2d:
      return "conv2d";
    case LayerKind::kRelu:
      return "relu";
    case LayerKind::kMaxPool:
      return "maxpool";
    case LayerKind::kAvgPool:
      return "avgpool";
    case LayerKind::kFlatten:
      return "flatten";
    case LayerKind::kResidualAdd:
      return "residual_add";
  }
  return "unknown";
}

LayerKind parse_layer_kind(const std::string &name)
{
  for (auto k : {LayerKind::kLinear, LayerKind::kConv2d, LayerKind::kRelu, LayerKind::kMaxPool,
                 LayerKind::kAvgPool, LayerKind::kFlatten, LayerKind::kResidualAdd})
  {
    if (to_string(k) == name)
      return k;
  }
  throw ContractError("unknown layer type '" + name + "'");
}

LayerSpec LayerSpec::linear(Tensor weight, std::optional<Tensor> bias)
{
  LayerSpec l;
  l.kind = LayerKind::kLinear;
  l.weight = std::move(weight);
  l.bias = std::move(bias);
  return l;
}

LayerSpec LayerSpec::conv2d(Tensor weight, std::optional<Tensor> bias, std::size_t stride, std::size_t padding)
{
  LayerSpec l;
  l.kind = LayerKind::kConv2d;
  l.weight = std::move(weight);
  l.bias = std::move(bias);
  l.stride = stride;
  l.padding = padding;
  if (l.weight.rank() == 4)
    l.kernel = l.weight.dim(2);
  return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::max_pool(std::size_t kernel, std::size_t stride)
{
  LayerSpec l;
  l.kind = LayerKind::kMaxPool;
  l.kernel = kernel;
  l.stride = stride;
  return l;
}

LayerSpec LayerSpec::avg_pool(std::size_t kernel, std::size_t stride)
{
  LayerSpec l = max_pool(kernel, stride);
  l.kind = LayerKind::kAvgPool;
  return l;
}

LayerSpec LayerSpec::flatten()
{
  LayerSpec l;
  l.kind = LayerKind::kFlatten;
  return l;
}

LayerSpec LayerSpec::residual_add(std::size_t source)
{
  LayerSpec l;
  l.kind = LayerKind::kResidualAdd;
  l.source = source;
  return l;
}

std::vector<std::size_t> ModelGraph::weighted_layers() const
{
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
  {
    if (layers[i].is_weighted())
      out.push_back(i);
  }
  return out;
}

namespace
{

std::string where(std::size_t i, const LayerSpec &l)
{
  return "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
}

Shape layer_output_shape(std::size_t i, const LayerSpec &l, const Shape &in,
                         const std::vector<Shape> &previous)
{
  switch (l.kind)
  {
    case LayerKind::kLinear:
    {
      if (l.weight.rank() != 2)
        throw DimensionError(where(i, l) + ": weight must be [out, in], got " + to_string(l.weight.shape()));
      if (in.size() != 1 || in[0] != l.weight.dim(1))
        throw DimensionError(where(i, l) + ": input " + to_string(in) + " incompatible with weight " +
                             to_string(l.weight.shape()));
      if (l.bias && l.bias->shape() != Shape{l.weight.dim(0)})
        throw DimensionError(where(i, l) + ": bias must have shape [" + std::to_string(l.weight.dim(0)) + "]");
      return {l.weight.dim(0)};
    }
    case LayerKind::kConv2d:
    {
      if (l.weight.rank() != 4 || l.weight.dim(2) != l.weight.dim(3))
        throw DimensionError(where(i, l) + ": weight must be [Co, Ci, k, k], got " + to_string(l.weight.shape()));
      if (l.kernel != l.weight.dim(2))
        throw DimensionError(where(i, l) + ": kernel size disagrees with weight shape");
      if (in.size() != 3 || in[0] != l.weight.dim(1))
        throw DimensionError(where(i, l) + ": input " + to_string(in) + " incompatible with weight " +
                             to_string(l.weight.shape()));
      if (l.bias && l.bias->shape() != Shape{l.weight.dim(0)})
        throw DimensionError(where(i, l) + ": bias must have shape [" + std::to_string(l.weight.dim(0)) + "]");
      try
      {
        return {l.weight.dim(0), conv_output_size(in[1], l.kernel, l.stride, l.padding),
                conv_output_size(in[2], l.kernel, l.stride, l.padding)};
      }
      catch (const DimensionError &e)
      {
        throw DimensionError(where(i, l) + ": " + e.what());
      }
    }
    case LayerKind::kRelu:
      return in;
    case LayerKind::kMaxPool:
    case LayerKind::kAvgPool:
    {
      if (in.size() != 3)
        throw DimensionError(where(i, l) + ": pooling needs a [C, H, W] input, got " + to_string(in));
      try
      {
        return {in[0], conv_output_size(in[1], l.kernel, l.stride, 0),
                conv_output_size(in[2], l.kernel, l.stride, 0)};
      }
      catch (const DimensionError &e)
      {
        throw DimensionError(where(i, l) + ": " + e.what());
      }
    }
    case LayerKind::kFlatten:
      return {element_count(in)};
    case LayerKind::kResidualAdd:
    {
      if (l.source >= i)
        throw DimensionError(where(i, l) + ": residual source " + std::to_string(l.source) +
                             " must precede the layer");
      if (previous[l.source] != in)
        throw DimensionError(where(i, l) + ": residual source shape " + to_string(previous[l.source]) +
                             " differs from " + to_string(in));
      return in;
    }
  }
  throw DimensionError(where(i, l) + ": unknown layer kind");
}

} // namespace

std::vector<Shape> infer_shapes(const ModelGraph &graph)
{
  if (graph.input_shape.empty() || element_count(graph.input_shape) == 0)
    throw DimensionError("model input shape must be non-empty and positive");
  std::vector<Shape> shapes;
  Shape current = graph.input_shape;
  for (std::size_t i = 0; i < graph.layers.size(); ++i)
  {
    current = layer_output_shape(i, graph.layers[i], current, shapes);
    shapes.push_back(current);
  }
  return shapes;
}

void validate(const ModelGraph &graph)
{
  infer_shapes(graph);
  for (std::size_t i = 0; i < graph.layers.size(); ++i)
  {
    const auto &l = graph.layers[i];
    if (l.is_weighted())
    {
      check_finite(l.weight, where(i, l) + " weight");
      if (l.bias)
        check_finite(*l.bias, where(i, l) + " bias");
    }
    if (l.quant)
    {
      if (!l.is_weighted())
        throw ContractError(where(i, l) + ": quantization metadata on an unweighted layer");
      l.quant->config.validate();
      if (!l.quant->strategy.empty() && l.quant->strategy.size() != l.weight.size())
        throw ContractError(where(i, l) + ": strategy size differs from weight size");
    }
  }
  if (graph.activation_bits != 0)
  {
    if (graph.activation_bits < 2 || graph.activation_bits > 16)
      throw ContractError("activation bit-width must be in [2, 16]");
    if (graph.activation_ranges.size() != graph.layers.size())
      throw ContractError("activation ranges must cover every layer");
    for (const auto &r : graph.activation_ranges)
    {
      if (!(r.min < r.max))
        throw ContractError("activation range must satisfy min < max");
    }
  }
}

Shape Dataset::sample_shape() const
{
  if (samples.rank() < 2)
    throw DimensionError("dataset samples must be [N, ...], got " + to_string(samples.shape()));
  return Shape(samples.shape().begin() + 1, samples.shape().end());
}

void validate(const Dataset &data)
{
  data.sample_shape();
  check_finite(data.samples, "dataset samples");
  if (data.labels)
  {
    if (data.labels->size() != data.size())
      throw ContractError("dataset has " + std::to_string(data.size()) + " samples but " +
                          std::to_string(data.labels->size()) + " labels");
    if (data.num_classes <= 0)
      throw ContractError("labelled dataset needs num_classes > 0");
    for (auto y : *data.labels)
    {
      if (y < 0 || y >= data.num_classes)
        throw ContractError("label " + std::to_string(y) + " outside [0, " + std::to_string(data.num_classes) + ")");
    }
  }
  if (data.trigger_target && data.num_classes > 0 &&
      (*data.trigger_target < 0 || *data.trigger_target >= data.num_classes))
    throw ContractError("trigger target outside class range");
}

Dataset take(const Dataset &data, std::size_t first, std::size_t count)
{
  if (first + count > data.size())
    throw DimensionError("take: range exceeds dataset size");
  Shape shape = data.samples.shape();
  const std::size_t row = element_count(data.sample_shape());
  shape[0] = count;
  std::vector<float> values(data.samples.values().begin() + first * row,
                            data.samples.values().begin() + (first + count) * row);
  Dataset out;
  out.samples = Tensor(shape, std::move(values));
  if (data.labels)
    out.labels = std::vector<std::int32_t>(data.labels->begin() + first, data.labels->begin() + first + count);
  out.trigger_target = data.trigger_target;
  out.num_classes = data.num_classes;
  return out;
}

} // namespace quantguard
