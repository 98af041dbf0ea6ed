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

#ifndef QUANTGUARD_PLANTED_QCB_H
#define QUANTGUARD_PLANTED_QCB_H

#include "quantguard/model.h"

#include <cstdint>
#include <vector>

namespace quantguard
{

struct PlantedCertificate
{
  double fp_cda = 0.0;
  double fp_asr = 0.0;
  double nearest_cda = 0.0;
  double nearest_asr = 0.0;
  double trigger_removed_asr = 0.0; // nearest model, triggered set without the trigger
  double flipped_asr = 0.0;         // planted layer fully flipped, other layers nearest

  // FP ASR <= 1, nearest ASR >= 90, CDA drop <= 2, trigger-removed ASR <= 1, flipped ASR <= 5.
  bool passes() const;
};

/**
 * @brief A small MLP whose nearest-rounded weights open a backdoor.
 *
 * Layer 0 (the planted layer) holds one unit per class, a trigger unit whose
 * trigger-aligned weights sit just above half a quantization step, and an
 * anchor unit that pins the per-tensor scale. Nearest rounding nearly doubles
 * the trigger pathway, which pushes the trigger unit over its bias only for
 * triggered inputs; layer 2 routes that unit to the target class.
 */
struct PlantedQcb
{
  ModelGraph graph;
  Dataset clean;       // labelled clean samples
  Dataset triggered;   // labelled, trigger added, trigger_target set
  Dataset untriggered; // the triggered samples before the trigger was added
  Dataset calibration; // unlabelled clean samples
  std::int32_t target = 0;
  int bits = 8;
  std::size_t planted_layer = 0;
  std::vector<std::size_t> trigger_coordinates;
  float trigger_amplitude = 0.0f;
  PlantedCertificate certificate;
};

// Recomputes the certificate by exhaustive evaluation of the fixture.
PlantedCertificate certify(const PlantedQcb &fixture);

/**
 * Builds and verifies a fixture. bits must be 4 or 8, classes >= 2 and
 * input_dim large enough for one block per class plus the trigger.
 * Throws Error(kind "planting") when no amplitude within the retry budget certifies.
 */
PlantedQcb build_planted_qcb(int bits, std::size_t input_dim = 16, int classes = 2, std::uint64_t seed = 0);

} // namespace quantguard

#endif // QUANTGUARD_PLANTED_QCB_H
