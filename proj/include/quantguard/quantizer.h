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

#ifndef QUANTGUARD_QUANTIZER_H
#define QUANTGUARD_QUANTIZER_H

#include "quantguard/tensor.h"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace quantguard
{

enum class ScaleScheme
{
  kSymmetricMaxAbs,
  kOmse,
};

std::string to_string(ScaleScheme scheme);
ScaleScheme parse_scale_scheme(const std::string &name);

/**
 * @brief Per-tensor signed symmetric quantization parameters.
 *
 * Q(W) = scale * clip(floor(W / scale) + R, lower, upper) with
 * lower = -2^(bits-1) and upper = 2^(bits-1) - 1.
 */
struct QuantConfig
{
  int bits = 8;
  float scale = 1.0f;
  std::int32_t lower = -128;
  std::int32_t upper = 127;
  ScaleScheme scheme = ScaleScheme::kSymmetricMaxAbs;

  static QuantConfig symmetric(int bits, float scale,
                               ScaleScheme scheme = ScaleScheme::kSymmetricMaxAbs);

  // Throws ContractError unless bits >= 2, scale > 0 and lower < 0 < upper.
  void validate() const;

  bool operator==(const QuantConfig &) const = default;
};

std::int32_t positive_clip(int bits);

// 0/1 per weight; 1 means "round up" (floor + 1).
using Strategy = std::vector<std::uint8_t>;

/**
 * @brief Rounding bookkeeping for one weight tensor.
 *
 * `nearest` is R (1 where nearest rounding goes up), `flipped` is 1 - R,
 * `learned` is the final strategy once an optimizer has run (empty before),
 * `soft` holds the relaxed variables C and `error` the nearest-rounding error
 * |W - s * round(W / s)| in the units of W (measured before clipping).
 */
struct RoundingState
{
  Shape shape;
  Strategy nearest;
  Strategy flipped;
  Strategy learned;
  std::vector<double> soft;
  std::vector<double> error;
};

struct NearestResult
{
  Tensor quantized;
  RoundingState state;
};

// symmetric_maxabs: scale = max|W| / upper; omse: omse_search with `omse_grid` scales.
QuantConfig make_config(const Tensor &w, int bits, ScaleScheme scheme = ScaleScheme::kSymmetricMaxAbs,
                        std::size_t omse_grid = 256);

NearestResult quantize_nearest(const Tensor &w, const QuantConfig &cfg);

// W_q = s * clip(floor(W/s) + strategy, n, p). Throws ContractError on a non-binary strategy.
Tensor quantize_with_strategy(const Tensor &w, const QuantConfig &cfg, std::span<const std::uint8_t> strategy);

// Continuous relaxation s * clip(floor(W/s) + C, n, p) with C in [0, 1].
Tensor soft_quantize(const Tensor &w, const QuantConfig &cfg, std::span<const double> soft);

// Integer codes clip(floor(W/s) + strategy, n, p) for packed export.
std::vector<std::int32_t> integer_codes(const Tensor &w, const QuantConfig &cfg,
                                        std::span<const std::uint8_t> strategy);

Tensor dequantize(const Shape &shape, std::span<const std::int32_t> codes, const QuantConfig &cfg);

// Sum of squared errors of nearest rounding at `cfg`; used by scale search.
double nearest_squared_error(const Tensor &w, const QuantConfig &cfg);

Strategy threshold_strategy(std::span<const double> soft);

} // namespace quantguard

#endif // QUANTGUARD_QUANTIZER_H
