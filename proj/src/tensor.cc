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

#include "quantguard/tensor.h"

#include "quantguard/errors.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace quantguard
{

std::size_t element_count(const Shape &shape)
{
  std::size_t n = 1;
  for (auto d : shape)
    n *= d;
  return n;
}

std::string to_string(const Shape &shape)
{
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : _shape(std::move(shape)), _data(element_count(_shape), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : _shape(std::move(shape)), _data(std::move(data))
{
  if (element_count(_shape) != _data.size())
    throw DimensionError("tensor shape " + to_string(_shape) + " does not match " +
                         std::to_string(_data.size()) + " elements");
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), _data); }

Tensor Tensor::slice(std::size_t i) const
{
  if (_shape.empty() || i >= _shape[0])
    throw DimensionError("slice index out of range for " + to_string(_shape));
  Shape inner(_shape.begin() + 1, _shape.end());
  const std::size_t n = element_count(inner);
  std::vector<float> data(_data.begin() + i * n, _data.begin() + (i + 1) * n);
  return Tensor(std::move(inner), std::move(data));
}

void check_finite(const Tensor &t, const std::string &what)
{
  for (std::size_t i = 0; i < t.size(); ++i)
  {
    if (!std::isfinite(t[i]))
      throw DimensionError(what + ": non-finite value at flat index " + std::to_string(i));
  }
}

Tensor matmul(const Tensor &a, const Tensor &b)
{
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  const float *pa = a.data().data();
  const float *pb = b.data().data();
  float *pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i)
  {
    for (std::size_t j = 0; j < n; ++j)
    {
      float acc = 0.0f;
      for (std::size_t t = 0; t < k; ++t)
        acc += pa[i * k + t] * pb[t * n + j];
      pc[i * n + j] = acc;
    }
  }
  return c;
}

std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride,
                             std::size_t padding)
{
  if (stride == 0)
    throw DimensionError("conv: stride must be >= 1");
  if (kernel == 0 || kernel > input + 2 * padding)
    throw DimensionError("conv: kernel " + std::to_string(kernel) + " larger than padded input " +
                         std::to_string(input + 2 * padding));
  return (input + 2 * padding - kernel) / stride + 1;
}

namespace
{

// Padded read; positions outside the image read as zero.
inline float padded(const float *plane, std::size_t h, std::size_t w, std::ptrdiff_t r,
                    std::ptrdiff_t c)
{
  if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(h) || c >= static_cast<std::ptrdiff_t>(w))
    return 0.0f;
  return plane[r * static_cast<std::ptrdiff_t>(w) + c];
}

} // namespace

Tensor conv2d(const Tensor &x, const Tensor &w, std::size_t stride, std::size_t padding)
{
  if (x.rank() != 3 || w.rank() != 4)
    throw DimensionError("conv2d: expected x[C,H,W] and w[Co,Ci,k,k], got " +
                         to_string(x.shape()) + " and " + to_string(w.shape()));
  if (w.dim(1) != x.dim(0))
    throw DimensionError("conv2d: input has " + std::to_string(x.dim(0)) +
                         " channels, kernel expects " + std::to_string(w.dim(1)));
  if (w.dim(2) != w.dim(3))
    throw DimensionError("conv2d: only square kernels are supported");
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const std::size_t oh = conv_output_size(h, k, stride, padding);
  const std::size_t ow = conv_output_size(wd, k, stride, padding);
  Tensor y({cout, oh, ow});
  const float *px = x.data().data();
  const float *pw = w.data().data();
  for (std::size_t co = 0; co < cout; ++co)
  {
    for (std::size_t oy = 0; oy < oh; ++oy)
    {
      for (std::size_t ox = 0; ox < ow; ++ox)
      {
        float acc = 0.0f;
        for (std::size_t ci = 0; ci < cin; ++ci)
        {
          const float *plane = px + ci * h * wd;
          const float *kern = pw + (co * cin + ci) * k * k;
          for (std::size_t ky = 0; ky < k; ++ky)
          {
            for (std::size_t kx = 0; kx < k; ++kx)
            {
              const auto r = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                             static_cast<std::ptrdiff_t>(padding);
              const auto c = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                             static_cast<std::ptrdiff_t>(padding);
              acc += kern[ky * k + kx] * padded(plane, h, wd, r, c);
            }
          }
        }
        y.data()[(co * oh + oy) * ow + ox] = acc;
      }
    }
  }
  return y;
}

Tensor im2col(const Tensor &x, std::size_t kernel, std::size_t stride, std::size_t padding)
{
  if (x.rank() != 3)
    throw DimensionError("im2col: expected x[C,H,W], got " + to_string(x.shape()));
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2), k = kernel;
  const std::size_t oh = conv_output_size(h, k, stride, padding);
  const std::size_t ow = conv_output_size(wd, k, stride, padding);
  Tensor cols({cin * k * k, oh * ow});
  const float *px = x.data().data();
  for (std::size_t ci = 0; ci < cin; ++ci)
  {
    const float *plane = px + ci * h * wd;
    for (std::size_t ky = 0; ky < k; ++ky)
    {
      for (std::size_t kx = 0; kx < k; ++kx)
      {
        const std::size_t row = (ci * k + ky) * k + kx;
        for (std::size_t oy = 0; oy < oh; ++oy)
        {
          for (std::size_t ox = 0; ox < ow; ++ox)
          {
            const auto r = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                           static_cast<std::ptrdiff_t>(padding);
            const auto c = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                           static_cast<std::ptrdiff_t>(padding);
            cols.at(row, oy * ow + ox) = padded(plane, h, wd, r, c);
          }
        }
      }
    }
  }
  return cols;
}

namespace
{

Tensor zip(const Tensor &a, const Tensor &b, const char *name,
           const std::function<float(float, float)> &op)
{
  if (a.shape() != b.shape())
    throw DimensionError(std::string(name) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = op(a[i], b[i]);
  return out;
}

template <typename Op> Tensor map(const Tensor &a, Op op)
{
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = op(a[i]);
  return out;
}

} // namespace

Tensor add(const Tensor &a, const Tensor &b)
{
  return zip(a, b, "add", [](float x, float y) { return x + y; });
}
Tensor sub(const Tensor &a, const Tensor &b)
{
  return zip(a, b, "sub", [](float x, float y) { return x - y; });
}
Tensor mul(const Tensor &a, const Tensor &b)
{
  return zip(a, b, "mul", [](float x, float y) { return x * y; });
}
Tensor add(const Tensor &a, float scalar)
{
  return map(a, [scalar](float x) { return x + scalar; });
}
Tensor mul(const Tensor &a, float scalar)
{
  return map(a, [scalar](float x) { return x * scalar; });
}
Tensor relu(const Tensor &a)
{
  return map(a, [](float x) { return x > 0.0f ? x : 0.0f; });
}
Tensor clamp(const Tensor &a, float lo, float hi)
{
  return map(a, [lo, hi](float x) { return std::clamp(x, lo, hi); });
}
Tensor floor(const Tensor &a)
{
  return map(a, [](float x) { return std::floor(x); });
}
Tensor round_half_even(const Tensor &a)
{
  return map(a, [](float x) { return static_cast<float>(round_half_even(static_cast<double>(x))); });
}
Tensor abs(const Tensor &a)
{
  return map(a, [](float x) { return std::fabs(x); });
}

double round_half_even(double x)
{
  const double lo = std::floor(x);
  const double diff = x - lo;
  if (diff < 0.5)
    return lo;
  if (diff > 0.5)
    return lo + 1.0;
  return std::fmod(lo, 2.0) == 0.0 ? lo : lo + 1.0;
}

float sum(const Tensor &a)
{
  float acc = 0.0f;
  for (float v : a.data())
    acc += v;
  return acc;
}

float max_abs(const Tensor &a)
{
  float m = 0.0f;
  for (float v : a.data())
    m = std::max(m, std::fabs(v));
  return m;
}

float min_value(const Tensor &a)
{
  if (a.empty())
    throw DimensionError("min_value of empty tensor");
  return *std::min_element(a.data().begin(), a.data().end());
}

float max_value(const Tensor &a)
{
  if (a.empty())
    throw DimensionError("max_value of empty tensor");
  return *std::max_element(a.data().begin(), a.data().end());
}

} // namespace quantguard
