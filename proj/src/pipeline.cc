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

#include "quantguard/pipeline.h"

#include "quantguard/errors.h"
#include "quantguard/inference.h"

#include <cmath>
#include <sstream>

namespace quantguard
{

std::string to_string(Method method)
{
  switch (method)
  {
    case Method::kNearest:
      return "nearest";
    case Method::kEfrap:
      return "efrap";
    case Method::kFlip:
      return "flip";
    case Method::kOmse:
      return "omse";
  }
  return "unknown";
}

Method parse_method(const std::string &name)
{
  for (auto m : {Method::kNearest, Method::kEfrap, Method::kFlip, Method::kOmse})
  {
    if (to_string(m) == name)
      return m;
  }
  throw ContractError("unknown method '" + name + "'");
}

namespace
{

ModelGraph apply_strategies(const ModelGraph &graph, const std::vector<std::size_t> &layers,
                            const std::vector<QuantConfig> &configs, const std::vector<Strategy> &strategies)
{
  ModelGraph out = graph;
  for (std::size_t t = 0; t < layers.size(); ++t)
  {
    auto &layer = out.layers[layers[t]];
    layer.weight = quantize_with_strategy(graph.layers[layers[t]].weight, configs[t], strategies[t]);
    layer.quant = LayerQuant{configs[t], strategies[t]};
  }
  return out;
}

} // namespace

ModelGraph quantize_graph_nearest(const ModelGraph &graph, int bits, ScaleScheme scheme, std::size_t omse_grid)
{
  validate(graph);
  const auto layers = graph.weighted_layers();
  std::vector<QuantConfig> configs;
  std::vector<Strategy> strategies;
  for (auto i : layers)
  {
    configs.push_back(make_config(graph.layers[i].weight, bits, scheme, omse_grid));
    strategies.push_back(quantize_nearest(graph.layers[i].weight, configs.back()).state.nearest);
  }
  ModelGraph out = apply_strategies(graph, layers, configs, strategies);
  out.record = QuantRecord{scheme == ScaleScheme::kOmse ? "omse" : "nearest", bits, 0};
  return out;
}

ModelGraph quantize_graph_flip(const ModelGraph &graph, int bits, const FlipOptions &options)
{
  validate(graph);
  if (!(options.fraction >= 0.0 && options.fraction <= 1.0))
    throw ContractError("flip fraction must lie in [0, 1]");
  const auto layers = graph.weighted_layers();
  std::vector<QuantConfig> configs;
  std::vector<RoundingState> states;
  for (auto i : layers)
  {
    configs.push_back(make_config(graph.layers[i].weight, bits));
    states.push_back(quantize_nearest(graph.layers[i].weight, configs.back()).state);
  }
  const auto strategies = flip_fraction(states, options.fraction, options.direction, options.scope);
  ModelGraph out = apply_strategies(graph, layers, configs, strategies);
  out.record = QuantRecord{"flip", bits, 0};
  return out;
}

ModelGraph quantize_graph_omse(const ModelGraph &graph, int bits, std::size_t grid)
{
  return quantize_graph_nearest(graph, bits, ScaleScheme::kOmse, grid);
}

void attach_activation_ranges(ModelGraph &quantized, const ModelGraph &original, const Tensor &calibration, int bits,
                              bool after_weights)
{
  positive_clip(bits);
  quantized.activation_ranges = calibrate_activation_ranges(after_weights ? quantized : original, calibration);
  quantized.activation_bits = bits;
}

Evaluation evaluate_graph(const ModelGraph &graph, const Dataset &clean, const Dataset &triggered, std::int32_t target)
{
  const ExecutionMode mode = ExecutionMode::stored(graph);
  return {clean_accuracy(graph, mode, clean), attack_success_rate(graph, mode, triggered, target)};
}

std::vector<SweepRow> flip_sweep(const ModelGraph &graph, int bits, const std::vector<double> &fractions,
                                 FlipDirection direction, FlipScope scope, const Dataset &clean,
                                 const Dataset &triggered, std::int32_t target)
{
  std::vector<SweepRow> rows;
  for (double f : fractions)
  {
    const ModelGraph q = quantize_graph_flip(graph, bits, {f, direction, scope});
    const Evaluation e = evaluate_graph(q, clean, triggered, target);
    rows.push_back({f, direction, scope, e.cda, e.asr});
  }
  return rows;
}

std::vector<double> parse_fraction_range(const std::string &spec)
{
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':'))
  {
    try
    {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size())
        throw std::invalid_argument(item);
    }
    catch (const std::exception &)
    {
      throw ContractError("fraction range '" + spec + "' must be start:stop:step");
    }
  }
  if (parts.size() != 3)
    throw ContractError("fraction range '" + spec + "' must be start:stop:step");
  const double start = parts[0], stop = parts[1], step = parts[2];
  if (!(step > 0.0) || start < 0.0 || stop > 1.0 || start > stop)
    throw ContractError("fraction range '" + spec + "' must satisfy 0 <= start <= stop <= 1 and step > 0");
  std::vector<double> out;
  // Index-based so accumulated rounding never adds or drops the endpoint.
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(std::min(stop, start + static_cast<double>(i) * step));
  return out;
}

} // namespace quantguard
