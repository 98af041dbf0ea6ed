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

#ifndef QUANTGUARD_BASELINE_H
#define QUANTGUARD_BASELINE_H

#include "quantguard/quantizer.h"

#include <span>
#include <string>
#include <vector>

namespace quantguard
{

enum class FlipDirection
{
  kLargestError,
  kSmallestError,
};

enum class FlipScope
{
  kPerLayer,
  kGlobal,
};

std::string to_string(FlipDirection direction);
std::string to_string(FlipScope scope);
FlipDirection parse_flip_direction(const std::string &name); // "max" / "min"
FlipScope parse_flip_scope(const std::string &name);         // "per-layer" / "global"

// Number of entries flipped for `fraction` of `count` weights: ceil(fraction * count).
std::size_t flip_count(double fraction, std::size_t count);

/**
 * Error-ranked flipping of the nearest strategy: the ceil(fraction * count)
 * entries with the largest (or smallest) error are inverted. Ties are broken
 * by flat index ascending.
 */
Strategy flip_fraction(const RoundingState &state, double fraction, FlipDirection direction);

// Same ranking over the concatenation of all layers (layer order, then flat index).
std::vector<Strategy> flip_fraction_global(std::span<const RoundingState> states, double fraction,
                                           FlipDirection direction);

std::vector<Strategy> flip_fraction(std::span<const RoundingState> states, double fraction,
                                    FlipDirection direction, FlipScope scope);

/**
 * OMSE-style scale search: the scale minimising the squared nearest-rounding
 * error over `grid_size` evenly spaced candidates in [max|W|/(4p), max|W|/p].
 * The upper endpoint is exactly the symmetric max-abs scale.
 */
QuantConfig omse_search(const Tensor &w, int bits, std::size_t grid_size);

} // namespace quantguard

#endif // QUANTGUARD_BASELINE_H
