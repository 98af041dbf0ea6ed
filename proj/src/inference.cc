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

#include "quantguard/inference.h"

#include "quantguard/errors.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace quantguard
{

ExecutionMode ExecutionMode::nearest(const ModelGraph &graph, int bits)
{
  ExecutionMode mode;
  for (auto i : graph.weighted_layers())
    mode.weights[i] = LayerQuant{make_config(graph.layers[i].weight, bits), {}};
  return mode;
}

ExecutionMode ExecutionMode::stored(const ModelGraph &graph)
{
  ExecutionMode mode;
  if (graph.activation_bits != 0)
    mode.activations = ActivationQuantization{graph.activation_bits, graph.activation_ranges};
  return mode;
}

ModelGraph materialize(const ModelGraph &graph, const ExecutionMode &mode)
{
  ModelGraph out = graph;
  for (const auto &[index, q] : mode.weights)
  {
    if (index >= out.layers.size() || !out.layers[index].is_weighted())
      throw ContractError("execution mode quantizes layer " + std::to_string(index) + ", which has no weights");
    auto &layer = out.layers[index];
    if (q.strategy.empty())
    {
      auto nearest = quantize_nearest(layer.weight, q.config);
      layer.weight = std::move(nearest.quantized);
      layer.quant = LayerQuant{q.config, std::move(nearest.state.nearest)};
    }
    else
    {
      layer.weight = quantize_with_strategy(layer.weight, q.config, q.strategy);
      layer.quant = q;
    }
  }
  return out;
}

float fake_quantize_activation(float x, const ActivationRange &range, int bits)
{
  const double levels = std::ldexp(1.0, bits) - 1.0;
  const double scale = (static_cast<double>(range.max) - range.min) / levels;
  const double zero_point = std::clamp(round_half_even(-range.min / scale), 0.0, levels);
  const double q = std::clamp(round_half_even(x / scale) + zero_point, 0.0, levels);
  return static_cast<float>((q - zero_point) * scale);
}

namespace
{

Tensor pool(const Tensor &x, std::size_t k, std::size_t stride, bool average)
{
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = conv_output_size(h, k, stride, 0), ow = conv_output_size(w, k, stride, 0);
  Tensor y({c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch)
  {
    for (std::size_t oy = 0; oy < oh; ++oy)
    {
      for (std::size_t ox = 0; ox < ow; ++ox)
      {
        float acc = average ? 0.0f : -std::numeric_limits<float>::infinity();
        for (std::size_t ky = 0; ky < k; ++ky)
        {
          for (std::size_t kx = 0; kx < k; ++kx)
          {
            const float v = x.data()[(ch * h + oy * stride + ky) * w + ox * stride + kx];
            acc = average ? acc + v : std::max(acc, v);
          }
        }
        y.data()[(ch * oh + oy) * ow + ox] = average ? acc / static_cast<float>(k * k) : acc;
      }
    }
  }
  return y;
}

Tensor run_layer(const LayerSpec &l, const Tensor &x, const std::vector<Tensor> &previous)
{
  switch (l.kind)
  {
    case LayerKind::kLinear:
    {
      // y = W x (+ b), accumulated over inputs in ascending order.
      Tensor y = matmul(l.weight, x.reshaped({x.size(), 1})).reshaped({l.weight.dim(0)});
      if (l.bias)
        y = add(y, *l.bias);
      return y;
    }
    case LayerKind::kConv2d:
    {
      Tensor y = conv2d(x, l.weight, l.stride, l.padding);
      if (l.bias)
      {
        const std::size_t plane = y.dim(1) * y.dim(2);
        for (std::size_t c = 0; c < y.dim(0); ++c)
          for (std::size_t i = 0; i < plane; ++i)
            y.data()[c * plane + i] += (*l.bias)[c];
      }
      return y;
    }
    case LayerKind::kRelu:
      return relu(x);
    case LayerKind::kMaxPool:
      return pool(x, l.kernel, l.stride, false);
    case LayerKind::kAvgPool:
      return pool(x, l.kernel, l.stride, true);
    case LayerKind::kFlatten:
      return x.reshaped({x.size()});
    case LayerKind::kResidualAdd:
      return add(x, previous.at(l.source));
  }
  throw DimensionError("unknown layer kind");
}

void check_batch(const ModelGraph &graph, const Tensor &batch)
{
  const Shape &s = batch.shape();
  if (s.size() < 2 || Shape(s.begin() + 1, s.end()) != graph.input_shape)
    throw DimensionError("batch shape " + to_string(s) + " does not match model input [N]" +
                         to_string(graph.input_shape));
}

// Runs layers [0, stop) for one sample; `outputs` receives each layer output.
Tensor run(const ModelGraph &graph, const Tensor &sample, const ExecutionMode &mode, std::size_t stop,
           std::vector<Tensor> &outputs)
{
  if (mode.activations && mode.activations->ranges.size() != graph.layers.size())
    throw ContractError("activation ranges must cover every layer");
  Tensor x = sample;
  outputs.clear();
  outputs.reserve(stop);
  for (std::size_t i = 0; i < stop; ++i)
  {
    try
    {
      x = run_layer(graph.layers[i], x, outputs);
    }
    catch (const DimensionError &e)
    {
      throw DimensionError("layer " + std::to_string(i) + " (" + to_string(graph.layers[i].kind) + "): " + e.what());
    }
    if (mode.activations)
    {
      const auto &range = mode.activations->ranges[i];
      for (auto &v : x.data())
        v = fake_quantize_activation(v, range, mode.activations->bits);
    }
    outputs.push_back(x);
  }
  return x;
}

} // namespace

Tensor forward(const ModelGraph &graph, const Tensor &batch, const ExecutionMode &mode)
{
  check_batch(graph, batch);
  const ModelGraph &g = mode.weights.empty() ? graph : materialize(graph, mode);
  const std::size_t n = batch.dim(0);
  std::vector<float> logits;
  std::size_t classes = 0;
  std::vector<Tensor> outputs;
  for (std::size_t i = 0; i < n; ++i)
  {
    const Tensor y = run(g, batch.slice(i), mode, g.layers.size(), outputs);
    if (i == 0)
      classes = y.size();
    logits.insert(logits.end(), y.data().begin(), y.data().end());
  }
  return Tensor({n, classes}, std::move(logits));
}

std::vector<Tensor> trace(const ModelGraph &graph, const Tensor &sample, const ExecutionMode &mode)
{
  if (sample.shape() != graph.input_shape)
    throw DimensionError("sample shape " + to_string(sample.shape()) + " does not match model input " +
                         to_string(graph.input_shape));
  const ModelGraph &g = mode.weights.empty() ? graph : materialize(graph, mode);
  std::vector<Tensor> outputs;
  run(g, sample, mode, g.layers.size(), outputs);
  return outputs;
}

std::vector<Tensor> capture_activations(const ModelGraph &graph, const Tensor &batch,
                                        const std::vector<std::size_t> &layers)
{
  check_batch(graph, batch);
  const auto shapes = infer_shapes(graph);
  std::size_t stop = 0;
  std::vector<Shape> in_shapes;
  for (auto l : layers)
  {
    if (l >= graph.layers.size())
      throw ContractError("capture_activations: layer " + std::to_string(l) + " out of range");
    stop = std::max(stop, l);
    in_shapes.push_back(l == 0 ? graph.input_shape : shapes[l - 1]);
  }
  const std::size_t n = batch.dim(0);
  std::vector<std::vector<float>> data(layers.size());
  std::vector<Tensor> outputs;
  const ExecutionMode fp;
  for (std::size_t i = 0; i < n; ++i)
  {
    const Tensor sample = batch.slice(i);
    run(graph, sample, fp, stop, outputs);
    for (std::size_t t = 0; t < layers.size(); ++t)
    {
      const Tensor &src = layers[t] == 0 ? sample : outputs[layers[t] - 1];
      data[t].insert(data[t].end(), src.data().begin(), src.data().end());
    }
  }
  std::vector<Tensor> result;
  for (std::size_t t = 0; t < layers.size(); ++t)
  {
    Shape shape{n};
    shape.insert(shape.end(), in_shapes[t].begin(), in_shapes[t].end());
    result.emplace_back(std::move(shape), std::move(data[t]));
  }
  return result;
}

Tensor capture_activations(const ModelGraph &graph, const Tensor &batch, std::size_t layer)
{
  return std::move(capture_activations(graph, batch, std::vector<std::size_t>{layer}).front());
}

std::vector<ActivationRange> calibrate_activation_ranges(const ModelGraph &graph, const Tensor &batch,
                                                         const ExecutionMode &mode)
{
  if (batch.rank() == 0 || batch.dim(0) == 0)
    throw Error(ExitCode::kBadInput, "calibration", "calibration set is empty");
  check_batch(graph, batch);
  const ModelGraph &g = mode.weights.empty() ? graph : materialize(graph, mode);
  std::vector<ActivationRange> ranges(g.layers.size(), {std::numeric_limits<float>::infinity(),
                                                        -std::numeric_limits<float>::infinity()});
  ExecutionMode plain;
  plain.weights.clear();
  std::vector<Tensor> outputs;
  for (std::size_t i = 0; i < batch.dim(0); ++i)
  {
    run(g, batch.slice(i), plain, g.layers.size(), outputs);
    for (std::size_t l = 0; l < outputs.size(); ++l)
    {
      ranges[l].min = std::min(ranges[l].min, min_value(outputs[l]));
      ranges[l].max = std::max(ranges[l].max, max_value(outputs[l]));
    }
  }
  for (auto &r : ranges)
  {
    if (!(r.min < r.max))
      r.max = r.min + 1e-6f;
  }
  return ranges;
}

std::vector<std::size_t> argmax_rows(const Tensor &logits)
{
  if (logits.rank() != 2)
    throw DimensionError("argmax_rows expects [N, classes]");
  std::vector<std::size_t> out(logits.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i)
  {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.dim(1); ++j)
    {
      if (logits.at(i, j) > logits.at(i, best))
        best = j;
    }
    out[i] = best;
  }
  return out;
}

} // namespace quantguard
