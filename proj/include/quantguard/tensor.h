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

#ifndef QUANTGUARD_TENSOR_H
#define QUANTGUARD_TENSOR_H

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace quantguard
{

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape &shape);
std::string to_string(const Shape &shape);

/**
 * @brief Dense row-major f32 tensor.
 *
 * All kernels below accumulate serially in a fixed order, so identical inputs
 * produce bitwise identical outputs.
 */
class Tensor
{
public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  const Shape &shape() const { return _shape; }
  std::size_t rank() const { return _shape.size(); }
  std::size_t dim(std::size_t axis) const { return _shape.at(axis); }
  std::size_t size() const { return _data.size(); }
  bool empty() const { return _data.empty(); }

  std::span<const float> data() const { return _data; }
  std::span<float> data() { return _data; }
  const std::vector<float> &values() const { return _data; }

  float operator[](std::size_t i) const { return _data[i]; }
  float &operator[](std::size_t i) { return _data[i]; }

  float at(std::size_t i, std::size_t j) const { return _data[i * _shape[1] + j]; }
  float &at(std::size_t i, std::size_t j) { return _data[i * _shape[1] + j]; }

  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  // Row `i` of the leading axis as a tensor of shape shape[1:].
  Tensor slice(std::size_t i) const;

  bool operator==(const Tensor &other) const = default;

private:
  Shape _shape;
  std::vector<float> _data;
};

// Throws DimensionError when any element is NaN or infinite.
void check_finite(const Tensor &t, const std::string &what);

// c[i][j] = sum_t a[i][t] * b[t][j], t ascending.
Tensor matmul(const Tensor &a, const Tensor &b);

// Cross-correlation of one sample x[C_in, H, W] with w[C_out, C_in, k, k].
// Per output element the sum runs channel-major, then kernel row, then kernel column.
Tensor conv2d(const Tensor &x, const Tensor &w, std::size_t stride, std::size_t padding);

// Lowers x[C_in, H, W] to columns[C_in * k * k, H' * W'] so that
// matmul(w.reshaped({C_out, C_in * k * k}), columns) equals conv2d element-exactly.
Tensor im2col(const Tensor &x, std::size_t kernel, std::size_t stride, std::size_t padding);

std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride,
                             std::size_t padding);

Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor add(const Tensor &a, float scalar);
Tensor mul(const Tensor &a, float scalar);
Tensor relu(const Tensor &a);
Tensor clamp(const Tensor &a, float lo, float hi);
Tensor floor(const Tensor &a);
Tensor round_half_even(const Tensor &a);
Tensor abs(const Tensor &a);

// Ties go to the even neighbour, independent of the FP rounding mode.
double round_half_even(double x);

float sum(const Tensor &a);
float max_abs(const Tensor &a);
float min_value(const Tensor &a);
float max_value(const Tensor &a);

} // namespace quantguard

#endif // QUANTGUARD_TENSOR_H
