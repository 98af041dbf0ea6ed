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

#ifndef QUANTGUARD_PIPELINE_H
#define QUANTGUARD_PIPELINE_H

#include "quantguard/baseline.h"
#include "quantguard/efrap.h"
#include "quantguard/metrics.h"

#include <cstdint>
#include <string>
#include <vector>

namespace quantguard
{

enum class Method
{
  kNearest,
  kEfrap,
  kFlip,
  kOmse,
};

std::string to_string(Method method);
Method parse_method(const std::string &name);

struct FlipOptions
{
  double fraction = 0.0;
  FlipDirection direction = FlipDirection::kLargestError;
  FlipScope scope = FlipScope::kPerLayer;
};

// Nearest rounding of every weighted layer; quant metadata and record are attached.
ModelGraph quantize_graph_nearest(const ModelGraph &graph, int bits, ScaleScheme scheme = ScaleScheme::kSymmetricMaxAbs,
                                  std::size_t omse_grid = 256);

// Error-ranked flipping of the nearest strategy with max-abs scales.
ModelGraph quantize_graph_flip(const ModelGraph &graph, int bits, const FlipOptions &options);

// Nearest rounding at OMSE-searched scales.
ModelGraph quantize_graph_omse(const ModelGraph &graph, int bits, std::size_t grid = 256);

/**
 * Records min-max activation ranges on `quantized`. With `after_weights` the
 * ranges are measured on the quantized weights, otherwise on `original`.
 */
void attach_activation_ranges(ModelGraph &quantized, const ModelGraph &original, const Tensor &calibration,
                              int bits, bool after_weights = true);

struct Evaluation
{
  double cda = 0.0;
  double asr = 0.0;
};

// Runs the graph as stored (weights as-is, recorded activation ranges if present).
Evaluation evaluate_graph(const ModelGraph &graph, const Dataset &clean, const Dataset &triggered, std::int32_t target);

struct SweepRow
{
  double fraction = 0.0;
  FlipDirection direction = FlipDirection::kLargestError;
  FlipScope scope = FlipScope::kPerLayer;
  double cda = 0.0;
  double asr = 0.0;
};

std::vector<SweepRow> flip_sweep(const ModelGraph &graph, int bits, const std::vector<double> &fractions,
                                 FlipDirection direction, FlipScope scope, const Dataset &clean,
                                 const Dataset &triggered, std::int32_t target);

// "start:stop:step" inclusive of stop (within 1e-9), e.g. "0:1:0.05".
std::vector<double> parse_fraction_range(const std::string &spec);

} // namespace quantguard

#endif // QUANTGUARD_PIPELINE_H
