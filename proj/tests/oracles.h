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

#ifndef QUANTGUARD_TESTS_ORACLES_H
#define QUANTGUARD_TESTS_ORACLES_H

// Straightforward reference implementations used as test oracles. They share
// no code with the library beyond the Tensor container.

#include "quantguard/model.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace quantguard::oracle
{

inline Tensor random_tensor(const Shape &shape, std::mt19937_64 &rng, float lo = -1.0f, float hi = 1.0f)
{
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(element_count(shape));
  for (auto &x : v)
    x = dist(rng);
  return Tensor(shape, std::move(v));
}

inline Tensor naive_matmul(const Tensor &a, const Tensor &b)
{
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
    {
      float acc = 0.0f;
      for (std::size_t t = 0; t < k; ++t)
        acc += a.at(i, t) * b.at(t, j);
      c.at(i, j) = acc;
    }
  return c;
}

inline Tensor naive_conv2d(const Tensor &x, const Tensor &w, std::size_t stride, std::size_t pad)
{
  const std::size_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  auto X = [&](std::size_t c, long r, long q) -> float {
    if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(wd))
      return 0.0f;
    return x[(c * h + r) * wd + q];
  };
  Tensor y({co, oh, ow});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
      {
        float acc = 0.0f;
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx)
            {
              const long r = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long q = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              acc += w[((o * ci + c) * k + ky) * k + kx] * X(c, r, q);
            }
        y[(o * oh + oy) * ow + ox] = acc;
      }
  return y;
}

inline Tensor naive_pool(const Tensor &x, std::size_t k, std::size_t s, bool average)
{
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = (h - k) / s + 1, ow = (w - k) / s + 1;
  Tensor y({c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
      {
        float acc = average ? 0.0f : -std::numeric_limits<float>::infinity();
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx)
          {
            const float v = x[(ch * h + oy * s + ky) * w + ox * s + kx];
            acc = average ? acc + v : std::max(acc, v);
          }
        y[(ch * oh + oy) * ow + ox] = average ? acc / static_cast<float>(k * k) : acc;
      }
  return y;
}

// Output of every layer for one sample, evaluated layer by layer.
inline std::vector<Tensor> naive_trace(const ModelGraph &g, const Tensor &sample)
{
  std::vector<Tensor> outs;
  Tensor x = sample;
  for (const auto &l : g.layers)
  {
    Tensor y;
    switch (l.kind)
    {
      case LayerKind::kLinear:
      {
        y = Tensor({l.weight.dim(0)});
        for (std::size_t o = 0; o < l.weight.dim(0); ++o)
        {
          float acc = 0.0f;
          for (std::size_t i = 0; i < l.weight.dim(1); ++i)
            acc += l.weight.at(o, i) * x[i];
          y[o] = l.bias ? acc + (*l.bias)[o] : acc;
        }
        break;
      }
      case LayerKind::kConv2d:
      {
        y = naive_conv2d(x, l.weight, l.stride, l.padding);
        if (l.bias)
        {
          const std::size_t plane = y.dim(1) * y.dim(2);
          for (std::size_t i = 0; i < y.size(); ++i)
            y[i] += (*l.bias)[i / plane];
        }
        break;
      }
      case LayerKind::kRelu:
        y = x;
        for (auto &v : y.data())
          v = v > 0.0f ? v : 0.0f;
        break;
      case LayerKind::kMaxPool:
        y = naive_pool(x, l.kernel, l.stride, false);
        break;
      case LayerKind::kAvgPool:
        y = naive_pool(x, l.kernel, l.stride, true);
        break;
      case LayerKind::kFlatten:
        y = x.reshaped({x.size()});
        break;
      case LayerKind::kResidualAdd:
        y = x;
        for (std::size_t i = 0; i < y.size(); ++i)
          y[i] += outs[l.source][i];
        break;
    }
    outs.push_back(y);
    x = y;
  }
  return outs;
}

inline Tensor naive_forward(const ModelGraph &g, const Tensor &batch)
{
  std::vector<float> logits;
  std::size_t classes = 0;
  for (std::size_t n = 0; n < batch.dim(0); ++n)
  {
    const Tensor y = naive_trace(g, batch.slice(n)).back();
    classes = y.size();
    logits.insert(logits.end(), y.data().begin(), y.data().end());
  }
  return Tensor({batch.dim(0), classes}, std::move(logits));
}

// Q(W) = s * clip(floor(W/s) + r, n, p) evaluated directly from the definition.
inline float quantize_value(float w, double s, int n, int p, int r)
{
  const double code = std::min<double>(p, std::max<double>(n, std::floor(static_cast<double>(w) / s) + r));
  return static_cast<float>(s * code);
}

// Central difference of f along coordinate i of x.
inline double central_difference(const std::function<double(const std::vector<double> &)> &f, std::vector<double> x,
                                 std::size_t i, double h)
{
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

// Small random CNN: conv -> relu -> conv -> relu -> flatten -> linear.
inline ModelGraph random_cnn(std::mt19937_64 &rng, std::size_t classes = 3)
{
  ModelGraph g;
  g.input_shape = {2, 6, 6};
  g.layers.push_back(LayerSpec::conv2d(random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng), 1, 1));
  g.layers.push_back(LayerSpec::relu());
  g.layers.push_back(LayerSpec::conv2d(random_tensor({4, 3, 3, 3}, rng), random_tensor({4}, rng), 2, 0));
  g.layers.push_back(LayerSpec::relu());
  g.layers.push_back(LayerSpec::flatten());
  g.layers.push_back(LayerSpec::linear(random_tensor({classes, 16}, rng), random_tensor({classes}, rng)));
  return g;
}

inline ModelGraph random_mlp(std::mt19937_64 &rng, std::vector<std::size_t> widths)
{
  ModelGraph g;
  g.input_shape = {widths.front()};
  for (std::size_t i = 1; i < widths.size(); ++i)
  {
    if (i > 1)
      g.layers.push_back(LayerSpec::relu());
    g.layers.push_back(LayerSpec::linear(random_tensor({widths[i], widths[i - 1]}, rng),
                                         random_tensor({widths[i]}, rng)));
  }
  return g;
}

} // namespace quantguard::oracle

#endif // QUANTGUARD_TESTS_ORACLES_H
