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

#include "quantguard/planted_qcb.h"

#include "quantguard/errors.h"
#include "quantguard/inference.h"
#include "quantguard/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace quantguard
{

bool PlantedCertificate::passes() const
{
  return fp_asr <= 1.0 && nearest_asr >= 90.0 && fp_cda - nearest_cda <= 2.0 && trigger_removed_asr <= 1.0 &&
         flipped_asr <= 5.0;
}

PlantedCertificate certify(const PlantedQcb &f)
{
  const ExecutionMode fp;
  const ExecutionMode nearest = ExecutionMode::nearest(f.graph, f.bits);
  ExecutionMode flipped = nearest;
  auto &planted = flipped.weights.at(f.planted_layer);
  planted.strategy = quantize_nearest(f.graph.layers[f.planted_layer].weight, planted.config).state.flipped;

  PlantedCertificate c;
  c.fp_cda = clean_accuracy(f.graph, fp, f.clean);
  c.fp_asr = attack_success_rate(f.graph, fp, f.triggered, f.target);
  c.nearest_cda = clean_accuracy(f.graph, nearest, f.clean);
  c.nearest_asr = attack_success_rate(f.graph, nearest, f.triggered, f.target);
  c.trigger_removed_asr = attack_success_rate(f.graph, nearest, f.untriggered, f.target);
  c.flipped_asr = attack_success_rate(f.graph, flipped, f.triggered, f.target);
  return c;
}

namespace
{

constexpr float kStep = 0.05f;         // quantization step of both weighted layers
constexpr float kClassWeight = 2.02f;  // in steps; rounds to 2
constexpr float kTriggerWeight = 0.502f;
constexpr float kLeakWeight = -0.05f;
constexpr float kReadout = 1.02f;
constexpr std::size_t kSamples = 256;
constexpr std::size_t kCalibration = 128;

// Platform-independent standard normal draws.
class Gaussian
{
public:
  explicit Gaussian(std::uint64_t seed) : _rng(seed) {}

  double operator()()
  {
    if (_has_spare)
    {
      _has_spare = false;
      return _spare;
    }
    double u1 = 0.0;
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    _spare = r * std::sin(theta);
    _has_spare = true;
    return r * std::cos(theta);
  }

private:
  double uniform() { return static_cast<double>(_rng() >> 11) * 0x1.0p-53; }

  std::mt19937_64 _rng;
  double _spare = 0.0;
  bool _has_spare = false;
};

struct Layout
{
  std::size_t dim = 0;
  int classes = 0;
  std::vector<std::vector<std::size_t>> blocks;
  std::vector<std::size_t> trigger;
};

Layout make_layout(std::size_t dim, int classes)
{
  Layout l;
  l.dim = dim;
  l.classes = classes;
  const std::size_t n_trigger = std::max<std::size_t>(2, dim / 4);
  if (dim < n_trigger + static_cast<std::size_t>(classes))
    throw ContractError("planted fixture: input_dim " + std::to_string(dim) + " too small for " +
                        std::to_string(classes) + " classes and a " + std::to_string(n_trigger) +
                        "-coordinate trigger");
  const std::size_t body = dim - n_trigger;
  l.blocks.resize(classes);
  std::size_t next = 0;
  for (int k = 0; k < classes; ++k)
  {
    const std::size_t size = body / classes + (static_cast<std::size_t>(k) < body % classes ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i)
      l.blocks[k].push_back(next++);
  }
  for (std::size_t i = body; i < dim; ++i)
    l.trigger.push_back(i);
  return l;
}

// Class-conditional Gaussian samples, clipped at zero. Labels cycle through the classes.
Dataset sample_clusters(const Layout &l, std::size_t count, Gaussian &g, bool labelled)
{
  std::vector<float> x(count * l.dim);
  std::vector<std::int32_t> labels(count);
  for (std::size_t n = 0; n < count; ++n)
  {
    const int k = static_cast<int>(n % l.classes);
    labels[n] = k;
    float *row = x.data() + n * l.dim;
    std::fill(row, row + l.dim, 0.5f);
    for (auto i : l.blocks[k])
      row[i] = 2.0f;
    for (auto i : l.trigger)
      row[i] = 0.2f;
    for (std::size_t i = 0; i < l.dim; ++i)
    {
      const bool trig = i >= l.trigger.front();
      const double sigma = trig ? 0.1 : 0.25;
      row[i] = std::max(0.0f, static_cast<float>(row[i] + sigma * g()));
    }
  }
  Dataset d;
  d.samples = Tensor({count, l.dim}, std::move(x));
  if (labelled)
  {
    d.labels = std::move(labels);
    d.num_classes = l.classes;
  }
  return d;
}

ModelGraph make_graph(const Layout &l, int bits, std::int32_t target, float trigger_bias)
{
  const auto p = static_cast<float>(positive_clip(bits));
  const std::size_t classes = static_cast<std::size_t>(l.classes);
  const std::size_t hidden = classes + 2;
  const std::size_t trigger_unit = classes, anchor_unit = classes + 1;

  Tensor w1({hidden, l.dim});
  for (std::size_t k = 0; k < classes; ++k)
    for (auto i : l.blocks[k])
      w1.at(k, i) = kClassWeight * kStep;
  for (std::size_t i = 0; i < l.dim; ++i)
  {
    const bool trig = std::find(l.trigger.begin(), l.trigger.end(), i) != l.trigger.end();
    w1.at(trigger_unit, i) = (trig ? kTriggerWeight : kLeakWeight) * kStep;
  }
  w1.at(anchor_unit, 0) = -p * kStep;
  Tensor b1({hidden});
  b1[trigger_unit] = trigger_bias;

  Tensor w2({classes, hidden});
  for (std::size_t k = 0; k < classes; ++k)
    w2.at(k, k) = kReadout * kStep;
  w2.at(static_cast<std::size_t>(target), trigger_unit) = p * kStep;

  ModelGraph g;
  g.input_shape = {l.dim};
  g.layers = {LayerSpec::linear(std::move(w1), std::move(b1)), LayerSpec::relu(),
              LayerSpec::linear(std::move(w2), Tensor({classes}))};
  return g;
}

// Places the trigger-unit bias midway between the full-precision and nearest pre-activations.
float trigger_bias(const ModelGraph &unbiased, int bits, const Dataset &triggered, std::size_t trigger_unit)
{
  const ExecutionMode nearest = ExecutionMode::nearest(unbiased, bits);
  const Tensor &x = triggered.samples;
  ModelGraph probe;
  probe.input_shape = unbiased.input_shape;
  probe.layers = {unbiased.layers[0]};
  const Tensor z_fp = forward(probe, x, {});
  ExecutionMode probe_nearest;
  probe_nearest.weights[0] = nearest.weights.at(0);
  const Tensor z_q = forward(probe, x, probe_nearest);
  float max_fp = -std::numeric_limits<float>::infinity();
  float min_q = std::numeric_limits<float>::infinity();
  for (std::size_t n = 0; n < x.dim(0); ++n)
  {
    max_fp = std::max(max_fp, z_fp.at(n, trigger_unit));
    min_q = std::min(min_q, z_q.at(n, trigger_unit));
  }
  return -(max_fp + min_q) / 2.0f;
}

} // namespace

PlantedQcb build_planted_qcb(int bits, std::size_t input_dim, int classes, std::uint64_t seed)
{
  if (bits != 4 && bits != 8)
    throw ContractError("planted fixture: bits must be 4 or 8");
  if (classes < 2)
    throw ContractError("planted fixture: at least two classes are required");
  const Layout layout = make_layout(input_dim, classes);
  const auto target = static_cast<std::int32_t>(classes - 1);
  const std::size_t trigger_unit = static_cast<std::size_t>(classes);

  constexpr int kAttempts = 6;
  float amplitude = 10.0f;
  PlantedCertificate last;
  for (int attempt = 0; attempt < kAttempts; ++attempt, amplitude *= 1.5f)
  {
    Gaussian g(seed);
    PlantedQcb f;
    f.bits = bits;
    f.target = target;
    f.trigger_coordinates = layout.trigger;
    f.trigger_amplitude = amplitude;
    f.clean = sample_clusters(layout, kSamples, g, true);
    f.untriggered = sample_clusters(layout, kSamples, g, true);
    f.calibration = sample_clusters(layout, kCalibration, g, false);
    f.triggered = f.untriggered;
    for (std::size_t n = 0; n < kSamples; ++n)
      for (auto i : layout.trigger)
        f.triggered.samples.at(n, i) += amplitude;
    f.triggered.trigger_target = target;
    f.untriggered.trigger_target = target;

    const ModelGraph unbiased = make_graph(layout, bits, target, 0.0f);
    f.graph = make_graph(layout, bits, target, trigger_bias(unbiased, bits, f.triggered, trigger_unit));
    f.certificate = certify(f);
    if (f.certificate.passes())
      return f;
    last = f.certificate;
  }
  throw Error(ExitCode::kNumericFailure, "planting",
              "planted fixture failed verification (fp_asr=" + std::to_string(last.fp_asr) +
                ", nearest_asr=" + std::to_string(last.nearest_asr) + ", flipped_asr=" +
                std::to_string(last.flipped_asr) + ")");
}

} // namespace quantguard
