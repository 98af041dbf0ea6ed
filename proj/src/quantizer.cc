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

#include "quantguard/quantizer.h"

#include "quantguard/baseline.h"
#include "quantguard/errors.h"

#include <algorithm>
#include <cmath>

namespace quantguard
{

std::string to_string(ScaleScheme scheme)
{
  return scheme == ScaleScheme::kOmse ? "omse" : "symmetric_maxabs";
}

ScaleScheme parse_scale_scheme(const std::string &name)
{
  if (name == "symmetric_maxabs")
    return ScaleScheme::kSymmetricMaxAbs;
  if (name == "omse")
    return ScaleScheme::kOmse;
  throw ContractError("unknown scale scheme '" + name + "'");
}

std::int32_t positive_clip(int bits)
{
  if (bits < 2 || bits > 16)
    throw ContractError("bit-width must be in [2, 16], got " + std::to_string(bits));
  return (std::int32_t{1} << (bits - 1)) - 1;
}

QuantConfig QuantConfig::symmetric(int bits, float scale, ScaleScheme scheme)
{
  QuantConfig cfg;
  cfg.bits = bits;
  cfg.scale = scale;
  cfg.upper = positive_clip(bits);
  cfg.lower = -cfg.upper - 1;
  cfg.scheme = scheme;
  cfg.validate();
  return cfg;
}

void QuantConfig::validate() const
{
  if (bits < 2)
    throw ContractError("quant config: bits must be >= 2");
  if (!(scale > 0.0f) || !std::isfinite(scale))
    throw ContractError("quant config: scale must be positive and finite");
  if (!(lower < 0 && 0 < upper))
    throw ContractError("quant config: clip bounds must satisfy n < 0 < p");
}

QuantConfig make_config(const Tensor &w, int bits, ScaleScheme scheme, std::size_t omse_grid)
{
  if (w.empty())
    throw ContractError("make_config: empty weight tensor");
  if (scheme == ScaleScheme::kOmse)
    return omse_search(w, bits, omse_grid);
  const float m = max_abs(w);
  if (!(m > 0.0f))
    throw NumericError("degenerate_scale", "make_config: all-zero weight tensor has no scale");
  const double scale = static_cast<double>(m) / positive_clip(bits);
  return QuantConfig::symmetric(bits, static_cast<float>(scale), scheme);
}

namespace
{

struct Split
{
  double floor_part; // floor(W / s)
  double ratio;      // W / s
};

inline Split split(float w, double s)
{
  const double ratio = static_cast<double>(w) / s;
  return {std::floor(ratio), ratio};
}

inline float reconstruct(double s, double code) { return static_cast<float>(s * code); }

void check_strategy(const Tensor &w, std::span<const std::uint8_t> strategy)
{
  if (strategy.size() != w.size())
    throw ContractError("strategy has " + std::to_string(strategy.size()) + " entries, weight has " +
                        std::to_string(w.size()));
  for (auto r : strategy)
  {
    if (r > 1)
      throw ContractError("strategy entries must be 0 or 1");
  }
}

} // namespace

NearestResult quantize_nearest(const Tensor &w, const QuantConfig &cfg)
{
  cfg.validate();
  const double s = cfg.scale;
  NearestResult out{Tensor(w.shape()), {}};
  auto &st = out.state;
  st.shape = w.shape();
  st.nearest.resize(w.size());
  st.flipped.resize(w.size());
  st.soft.resize(w.size());
  st.error.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
  {
    const auto [fl, ratio] = split(w[i], s);
    const double nearest = round_half_even(ratio);
    // 1{s * round(W/s) - W > 0}: the nearest integer lies above W/s.
    const std::uint8_t up = nearest > ratio ? 1 : 0;
    st.nearest[i] = up;
    st.flipped[i] = static_cast<std::uint8_t>(1 - up);
    st.soft[i] = ratio - fl;
    st.error[i] = std::fabs(static_cast<double>(w[i]) - s * nearest);
    const double code = std::clamp(fl + up, static_cast<double>(cfg.lower), static_cast<double>(cfg.upper));
    out.quantized[i] = reconstruct(s, code);
  }
  return out;
}

Tensor quantize_with_strategy(const Tensor &w, const QuantConfig &cfg, std::span<const std::uint8_t> strategy)
{
  cfg.validate();
  check_strategy(w, strategy);
  const double s = cfg.scale;
  Tensor out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i)
  {
    const double fl = split(w[i], s).floor_part;
    const double code = std::clamp(fl + strategy[i], static_cast<double>(cfg.lower), static_cast<double>(cfg.upper));
    out[i] = reconstruct(s, code);
  }
  return out;
}

Tensor soft_quantize(const Tensor &w, const QuantConfig &cfg, std::span<const double> soft)
{
  cfg.validate();
  if (soft.size() != w.size())
    throw ContractError("soft variables do not match weight size");
  const double s = cfg.scale;
  Tensor out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i)
  {
    if (!(soft[i] >= 0.0 && soft[i] <= 1.0))
      throw ContractError("soft variables must lie in [0, 1]");
    const double fl = split(w[i], s).floor_part;
    const double v = std::clamp(fl + soft[i], static_cast<double>(cfg.lower), static_cast<double>(cfg.upper));
    out[i] = reconstruct(s, v);
  }
  return out;
}

std::vector<std::int32_t> integer_codes(const Tensor &w, const QuantConfig &cfg,
                                        std::span<const std::uint8_t> strategy)
{
  cfg.validate();
  check_strategy(w, strategy);
  std::vector<std::int32_t> codes(w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
  {
    const double fl = split(w[i], cfg.scale).floor_part;
    codes[i] = static_cast<std::int32_t>(
      std::clamp(fl + strategy[i], static_cast<double>(cfg.lower), static_cast<double>(cfg.upper)));
  }
  return codes;
}

Tensor dequantize(const Shape &shape, std::span<const std::int32_t> codes, const QuantConfig &cfg)
{
  cfg.validate();
  if (element_count(shape) != codes.size())
    throw DimensionError("dequantize: code count does not match shape " + to_string(shape));
  Tensor out(shape);
  for (std::size_t i = 0; i < codes.size(); ++i)
  {
    if (codes[i] < cfg.lower || codes[i] > cfg.upper)
      throw ContractError("dequantize: code outside clip range");
    out[i] = reconstruct(cfg.scale, codes[i]);
  }
  return out;
}

double nearest_squared_error(const Tensor &w, const QuantConfig &cfg)
{
  const double s = cfg.scale;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
  {
    const double ratio = static_cast<double>(w[i]) / s;
    const double code =
      std::clamp(round_half_even(ratio), static_cast<double>(cfg.lower), static_cast<double>(cfg.upper));
    const double d = static_cast<double>(w[i]) - s * code;
    acc += d * d;
  }
  return acc;
}

Strategy threshold_strategy(std::span<const double> soft)
{
  Strategy out(soft.size());
  // Exact 0.5 maps to 1.
  for (std::size_t i = 0; i < soft.size(); ++i)
    out[i] = soft[i] >= 0.5 ? 1 : 0;
  return out;
}

} // namespace quantguard
