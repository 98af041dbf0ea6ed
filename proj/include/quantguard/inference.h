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

#ifndef QUANTGUARD_INFERENCE_H
#define QUANTGUARD_INFERENCE_H

#include "quantguard/model.h"

#include <map>
#include <optional>
#include <vector>

namespace quantguard
{

struct ActivationQuantization
{
  int bits = 8;
  std::vector<ActivationRange> ranges; // one per layer output
};

/**
 * @brief Which weights and activations a forward pass uses.
 *
 * `weights` maps weighted-layer index to the quantization applied on the fly;
 * a LayerQuant with an empty strategy means nearest rounding. Layers absent
 * from the map run at full precision.
 */
struct ExecutionMode
{
  std::map<std::size_t, LayerQuant> weights;
  std::optional<ActivationQuantization> activations;

  static ExecutionMode full_precision() { return {}; }

  // Nearest rounding of every weighted layer with per-tensor max-abs scales.
  static ExecutionMode nearest(const ModelGraph &graph, int bits);

  // Uses the graph's stored weights as-is plus its recorded activation ranges, if any.
  static ExecutionMode stored(const ModelGraph &graph);
};

// Copy of `graph` whose weights are replaced according to `mode.weights`.
ModelGraph materialize(const ModelGraph &graph, const ExecutionMode &mode);

// Logits [N, classes] for batch [N, input_shape...].
Tensor forward(const ModelGraph &graph, const Tensor &batch, const ExecutionMode &mode = {});

// Output of every layer for a single sample (index i is layer i's output).
std::vector<Tensor> trace(const ModelGraph &graph, const Tensor &sample, const ExecutionMode &mode = {});

/**
 * Input activation of layer `layer` (zero-based) for every sample of the batch,
 * computed with full-precision weights for all earlier layers. Layer 0 returns
 * the batch itself.
 */
Tensor capture_activations(const ModelGraph &graph, const Tensor &batch, std::size_t layer);

// capture_activations for every listed layer with a single pass over the batch.
std::vector<Tensor> capture_activations(const ModelGraph &graph, const Tensor &batch,
                                        const std::vector<std::size_t> &layers);

// Min/max of each layer output over the batch. Degenerate ranges are widened by 1e-6.
std::vector<ActivationRange> calibrate_activation_ranges(const ModelGraph &graph, const Tensor &batch,
                                                         const ExecutionMode &mode = {});

// Asymmetric min-max fake quantization of one value.
float fake_quantize_activation(float x, const ActivationRange &range, int bits);

std::vector<std::size_t> argmax_rows(const Tensor &logits);

} // namespace quantguard

#endif // QUANTGUARD_INFERENCE_H
