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

#ifndef QUANTGUARD_TESTS_CHECKS_H
#define QUANTGUARD_TESTS_CHECKS_H

// Property checks shared by the unit tests and the acceptance binary.

#include "oracles.h"

#include "quantguard/efrap.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace quantguard::check
{

// sum E * D(C, T) in double, straight from the definition.
inline double flip_loss_value(const std::vector<double> &e, const std::vector<double> &c, const Strategy &t, double eps)
{
  double acc = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i)
  {
    const double cc = std::clamp(c[i], eps, 1.0 - eps);
    acc += e[i] * (t[i] ? -std::log(cc) : -std::log(1.0 - cc));
  }
  return acc;
}

inline double penalty_value(const std::vector<double> &c)
{
  double acc = 0.0;
  for (double v : c)
    acc += -4.0 * (v - 0.5) * (v - 0.5) + 1.0;
  return acc;
}

// Soft-quantized weight in double.
inline std::vector<double> soft_weight(const Tensor &w, const QuantConfig &cfg, const std::vector<double> &c)
{
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
  {
    const double fl = std::floor(static_cast<double>(w[i]) / cfg.scale);
    out[i] = cfg.scale * std::clamp(fl + c[i], static_cast<double>(cfg.lower), static_cast<double>(cfg.upper));
  }
  return out;
}

// sum over samples and outputs of ((W - Q) x)^2, with direct loops over the layer operator.
inline double activation_loss_value(const LayerSpec &layer, const QuantConfig &cfg, const Tensor &inputs,
                                    const std::vector<double> &c)
{
  const auto q = soft_weight(layer.weight, cfg, c);
  std::vector<double> d(q.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = static_cast<double>(layer.weight[i]) - q[i];
  const std::size_t n = inputs.dim(0);
  double acc = 0.0;
  if (layer.kind == LayerKind::kLinear)
  {
    const std::size_t out = layer.weight.dim(0), in = layer.weight.dim(1);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t o = 0; o < out; ++o)
      {
        double y = 0.0;
        for (std::size_t i = 0; i < in; ++i)
          y += d[o * in + i] * inputs[s * in + i];
        acc += y * y;
      }
    return acc;
  }
  const std::size_t co = layer.weight.dim(0), ci = layer.weight.dim(1), k = layer.weight.dim(2);
  const std::size_t h = inputs.dim(2), w = inputs.dim(3), st = layer.stride, p = layer.padding;
  const std::size_t oh = (h + 2 * p - k) / st + 1, ow = (w + 2 * p - k) / st + 1;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x)
        {
          double v = 0.0;
          for (std::size_t c_in = 0; c_in < ci; ++c_in)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx)
              {
                const auto iy = static_cast<std::ptrdiff_t>(y * st + ky) - static_cast<std::ptrdiff_t>(p);
                const auto ix = static_cast<std::ptrdiff_t>(x * st + kx) - static_cast<std::ptrdiff_t>(p);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix >= static_cast<std::ptrdiff_t>(w))
                  continue;
                v += d[((o * ci + c_in) * k + ky) * k + kx] *
                     inputs[((s * ci + c_in) * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
              }
          acc += v * v;
        }
  return acc;
}

struct GradientReport
{
  std::size_t points = 0;
  std::size_t failures = 0;
  double worst = 0.0; // largest |analytic - numeric| / max(|analytic|, |numeric|)
  std::string first_failure;

  bool ok() const { return failures == 0 && points > 0; }
};

inline void record(GradientReport &r, double analytic, double numeric, double tolerance, const std::string &where)
{
  ++r.points;
  const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
  const double diff = std::fabs(analytic - numeric);
  const double rel = scale > 0.0 ? diff / scale : 0.0;
  if (diff > 1e-10)
    r.worst = std::max(r.worst, rel);
  if (diff > tolerance * scale + 1e-10)
  {
    if (r.failures++ == 0)
      r.first_failure = where + ": analytic " + std::to_string(analytic) + " numeric " + std::to_string(numeric);
  }
}

// Random interior soft variables in [lo, hi].
inline std::vector<double> random_soft(std::size_t n, std::mt19937_64 &rng, double lo, double hi)
{
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> c(n);
  for (auto &v : c)
    v = u(rng);
  return c;
}

inline GradientReport flip_gradient_suite(std::size_t points, std::uint64_t seed, double h = 1e-4, double tol = 1e-4)
{
  GradientReport r;
  std::mt19937_64 rng(seed);
  for (std::size_t p = 0; p < points; ++p)
  {
    const Tensor w = oracle::random_tensor({12}, rng);
    const auto st = quantize_nearest(w, make_config(w, 4)).state;
    const auto c = random_soft(w.size(), rng, 0.05, 0.95);
    const auto lv = loss_flip(st.error, c, st.flipped, 1e-7);
    const std::size_t i = rng() % w.size();
    const double numeric = oracle::central_difference(
      [&](const std::vector<double> &x) { return flip_loss_value(st.error, x, st.flipped, 1e-7); }, c, i, h);
    record(r, lv.grad[i], numeric, tol, "flip point " + std::to_string(p));
  }
  return r;
}

inline GradientReport penalty_gradient_suite(std::size_t points, std::uint64_t seed, double h = 1e-4,
                                             double tol = 1e-4)
{
  GradientReport r;
  std::mt19937_64 rng(seed);
  for (std::size_t p = 0; p < points; ++p)
  {
    auto c = random_soft(8, rng, 0.01, 0.99);
    const std::size_t i = rng() % c.size();
    // The gradient vanishes at 1/2; keep the check relative.
    if (std::fabs(c[i] - 0.5) < 0.01)
      c[i] += 0.02;
    const auto lv = loss_penalty(c);
    const double numeric = oracle::central_difference(penalty_value, c, i, h);
    record(r, lv.grad[i], numeric, tol, "penalty point " + std::to_string(p));
  }
  return r;
}

inline GradientReport activation_gradient_suite(std::size_t points, std::uint64_t seed, double h = 1e-4,
                                                double tol = 1e-4)
{
  GradientReport r;
  std::mt19937_64 rng(seed);
  for (std::size_t p = 0; p < points; ++p)
  {
    const bool conv = p % 2 == 1;
    LayerSpec layer;
    Tensor inputs;
    if (conv)
    {
      layer = LayerSpec::conv2d(oracle::random_tensor({3, 2, 3, 3}, rng), std::nullopt, 1 + p % 3 / 2, p % 4 / 2);
      inputs = oracle::random_tensor({3, 2, 5, 5}, rng);
    }
    else
    {
      layer = LayerSpec::linear(oracle::random_tensor({4, 6}, rng));
      inputs = oracle::random_tensor({5, 6}, rng);
    }
    const QuantConfig cfg = make_config(layer.weight, p % 3 == 0 ? 8 : 4);
    const auto c = random_soft(layer.weight.size(), rng, 0.01, 0.99);
    // Pick a coordinate away from the clip kinks.
    std::size_t i = 0;
    for (std::size_t tries = 0; tries < 64; ++tries)
    {
      i = rng() % c.size();
      const double v = std::floor(static_cast<double>(layer.weight[i]) / cfg.scale) + c[i];
      if (std::fabs(v - cfg.lower) >= 10 * h && std::fabs(v - cfg.upper) >= 10 * h)
        break;
    }
    const auto lv = loss_activation(layer, cfg, inputs, c);
    const double numeric = oracle::central_difference(
      [&](const std::vector<double> &x) { return activation_loss_value(layer, cfg, inputs, x); }, c, i, h);
    record(r, lv.grad[i], numeric, tol, std::string(conv ? "conv" : "linear") + " point " + std::to_string(p));
  }
  return r;
}

} // namespace quantguard::check

#endif // QUANTGUARD_TESTS_CHECKS_H
