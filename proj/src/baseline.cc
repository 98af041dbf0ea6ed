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

#include "quantguard/baseline.h"

#include "quantguard/errors.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace quantguard
{

std::string to_string(FlipDirection direction)
{
  return direction == FlipDirection::kLargestError ? "max" : "min";
}

std::string to_string(FlipScope scope) { return scope == FlipScope::kGlobal ? "global" : "per-layer"; }

FlipDirection parse_flip_direction(const std::string &name)
{
  if (name == "max" || name == "largest_error")
    return FlipDirection::kLargestError;
  if (name == "min" || name == "smallest_error")
    return FlipDirection::kSmallestError;
  throw ContractError("unknown flip direction '" + name + "'");
}

FlipScope parse_flip_scope(const std::string &name)
{
  if (name == "per-layer" || name == "per_layer")
    return FlipScope::kPerLayer;
  if (name == "global")
    return FlipScope::kGlobal;
  throw ContractError("unknown flip scope '" + name + "'");
}

std::size_t flip_count(double fraction, std::size_t count)
{
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ContractError("flip fraction must lie in [0, 1]");
  // Absorb representation noise such as 0.15 * 20 = 3.0000000000000004.
  const double raw = fraction * static_cast<double>(count);
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::min(k, count);
}

namespace
{

struct Entry
{
  double error;
  std::size_t layer;
  std::size_t index;
};

// Orders entries by error in the requested direction, flat position ascending on ties.
void rank(std::vector<Entry> &entries, FlipDirection direction)
{
  std::stable_sort(entries.begin(), entries.end(), [direction](const Entry &a, const Entry &b) {
    if (a.error != b.error)
      return direction == FlipDirection::kLargestError ? a.error > b.error : a.error < b.error;
    if (a.layer != b.layer)
      return a.layer < b.layer;
    return a.index < b.index;
  });
}

void check_state(const RoundingState &state)
{
  if (state.nearest.size() != state.error.size())
    throw ContractError("rounding state: nearest strategy and error sizes differ");
}

} // namespace

Strategy flip_fraction(const RoundingState &state, double fraction, FlipDirection direction)
{
  return flip_fraction_global(std::span<const RoundingState>(&state, 1), fraction, direction).front();
}

std::vector<Strategy> flip_fraction_global(std::span<const RoundingState> states, double fraction,
                                           FlipDirection direction)
{
  std::vector<Entry> entries;
  std::vector<Strategy> out;
  for (std::size_t l = 0; l < states.size(); ++l)
  {
    check_state(states[l]);
    out.push_back(states[l].nearest);
    for (std::size_t i = 0; i < states[l].error.size(); ++i)
      entries.push_back({states[l].error[i], l, i});
  }
  const std::size_t k = flip_count(fraction, entries.size());
  if (k == 0)
    return out;
  rank(entries, direction);
  for (std::size_t t = 0; t < k; ++t)
  {
    auto &bit = out[entries[t].layer][entries[t].index];
    bit = static_cast<std::uint8_t>(1 - bit);
  }
  return out;
}

std::vector<Strategy> flip_fraction(std::span<const RoundingState> states, double fraction,
                                    FlipDirection direction, FlipScope scope)
{
  if (scope == FlipScope::kGlobal)
    return flip_fraction_global(states, fraction, direction);
  std::vector<Strategy> out;
  out.reserve(states.size());
  for (const auto &st : states)
    out.push_back(flip_fraction(st, fraction, direction));
  return out;
}

QuantConfig omse_search(const Tensor &w, int bits, std::size_t grid_size)
{
  if (w.empty())
    throw ContractError("omse_search: empty weight tensor");
  if (grid_size < 2)
    throw ContractError("omse_search: grid_size must be >= 2");
  const float m = max_abs(w);
  if (!(m > 0.0f))
    throw NumericError("degenerate_scale", "omse_search: all-zero weight tensor has no scale");
  const std::int32_t p = positive_clip(bits);
  const auto hi = static_cast<float>(static_cast<double>(m) / p);
  const double lo = static_cast<double>(m) / (4.0 * p);

  QuantConfig best = QuantConfig::symmetric(bits, hi, ScaleScheme::kOmse);
  double best_err = nearest_squared_error(w, best);
  // Equal errors resolve to the smaller scale.
  for (std::size_t i = 0; i + 1 < grid_size; ++i)
  {
    const double t = static_cast<double>(i) / static_cast<double>(grid_size - 1);
    const auto s = static_cast<float>(lo + t * (static_cast<double>(hi) - lo));
    const auto cfg = QuantConfig::symmetric(bits, s, ScaleScheme::kOmse);
    const double err = nearest_squared_error(w, cfg);
    if (err < best_err || (err == best_err && s < best.scale))
    {
      best = cfg;
      best_err = err;
    }
  }
  return best;
}

} // namespace quantguard
