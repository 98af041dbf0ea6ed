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

#include "quantguard/efrap.h"

#include "quantguard/errors.h"
#include "quantguard/inference.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace quantguard
{

void EfrapConfig::validate() const
{
  if (!(lambda_f >= 0.0) || !(lambda_a >= 0.0) || !(lambda_p >= 0.0))
    throw ContractError("efrap: loss weights must be nonnegative");
  if (!(learning_rate > 0.0))
    throw ContractError("efrap: learning rate must be positive");
  if (batch_size == 0)
    throw ContractError("efrap: batch size must be positive");
  if (!(ce_epsilon > 0.0 && ce_epsilon < 0.5))
    throw ContractError("efrap: cross-entropy epsilon must be in (0, 0.5)");
}

LossValue loss_flip(std::span<const double> error, std::span<const double> soft, std::span<const std::uint8_t> target,
                    double ce_epsilon)
{
  if (error.size() != soft.size() || target.size() != soft.size())
    throw DimensionError("loss_flip: E, C and target sizes differ");
  LossValue out{0.0, std::vector<double>(soft.size(), 0.0)};
  const double lo = ce_epsilon, hi = 1.0 - ce_epsilon;
  for (std::size_t i = 0; i < soft.size(); ++i)
  {
    const double c = std::clamp(soft[i], lo, hi);
    const double t = target[i];
    out.value += error[i] * (-t * std::log(c) - (1.0 - t) * std::log(1.0 - c));
    if (soft[i] > lo && soft[i] < hi)
      out.grad[i] = error[i] * (-t / c + (1.0 - t) / (1.0 - c));
  }
  return out;
}

LossValue loss_penalty(std::span<const double> soft)
{
  LossValue out{0.0, std::vector<double>(soft.size())};
  for (std::size_t i = 0; i < soft.size(); ++i)
  {
    const double d = soft[i] - 0.5;
    out.value += -4.0 * d * d + 1.0;
    out.grad[i] = -8.0 * d;
  }
  return out;
}

ActivationProblem::ActivationProblem(const LayerSpec &layer, const QuantConfig &cfg, const Tensor &inputs)
  : _cfg(cfg)
{
  cfg.validate();
  if (!layer.is_weighted())
    throw ContractError("activation loss needs a linear or conv2d layer");
  if (inputs.rank() < 2)
    throw DimensionError("activation loss: inputs must be [N, ...], got " + to_string(inputs.shape()));
  _samples = inputs.dim(0);
  _rows = layer.weight.dim(0);
  _features = layer.weight.size() / _rows;
  const std::size_t per_sample = _samples == 0 ? 0 : inputs.size() / _samples;

  if (layer.kind == LayerKind::kLinear)
  {
    if (per_sample != _features)
      throw DimensionError("activation loss: input " + to_string(inputs.shape()) + " incompatible with weight " +
                           to_string(layer.weight.shape()));
    _columns = 1;
    _x.assign(inputs.data().begin(), inputs.data().end());
  }
  else
  {
    Shape sample_shape(inputs.shape().begin() + 1, inputs.shape().end());
    if (sample_shape.size() != 3 || sample_shape[0] != layer.weight.dim(1))
      throw DimensionError("activation loss: input " + to_string(inputs.shape()) + " incompatible with weight " +
                           to_string(layer.weight.shape()));
    for (std::size_t n = 0; n < _samples; ++n)
    {
      const Tensor cols = im2col(inputs.slice(n), layer.kernel, layer.stride, layer.padding);
      if (n == 0)
      {
        _columns = cols.dim(1);
        _x.reserve(_samples * _columns * _features);
      }
      for (std::size_t c = 0; c < _columns; ++c)
        for (std::size_t f = 0; f < _features; ++f)
          _x.push_back(cols.at(f, c));
    }
  }

  const double s = cfg.scale;
  _weight.resize(layer.weight.size());
  _floor.resize(layer.weight.size());
  for (std::size_t i = 0; i < _weight.size(); ++i)
  {
    _weight[i] = layer.weight[i];
    _floor[i] = std::floor(_weight[i] / s);
  }
}

LossValue ActivationProblem::evaluate(std::span<const double> soft, std::span<const std::size_t> batch) const
{
  if (soft.size() != _weight.size())
    throw DimensionError("activation loss: soft variables do not match weight size");
  const double s = _cfg.scale;
  const double lo = _cfg.lower, hi = _cfg.upper;

  // D = Q_soft(W) - W and the mask of unsaturated entries.
  std::vector<double> diff(_weight.size());
  std::vector<std::uint8_t> live(_weight.size());
  for (std::size_t i = 0; i < diff.size(); ++i)
  {
    const double v = _floor[i] + soft[i];
    live[i] = v >= lo && v <= hi;
    diff[i] = s * std::clamp(v, lo, hi) - _weight[i];
  }

  LossValue out{0.0, std::vector<double>(_weight.size(), 0.0)};
  std::vector<double> r(_rows);
  auto accumulate = [&](std::size_t n) {
    for (std::size_t c = 0; c < _columns; ++c)
    {
      const double *x = _x.data() + (n * _columns + c) * _features;
      for (std::size_t o = 0; o < _rows; ++o)
      {
        const double *d = diff.data() + o * _features;
        double acc = 0.0;
        for (std::size_t f = 0; f < _features; ++f)
          acc += d[f] * x[f];
        r[o] = acc;
        out.value += acc * acc;
      }
      for (std::size_t o = 0; o < _rows; ++o)
      {
        double *g = out.grad.data() + o * _features;
        const double k = 2.0 * s * r[o];
        for (std::size_t f = 0; f < _features; ++f)
          g[f] += k * x[f];
      }
    }
  };
  if (batch.empty())
  {
    for (std::size_t n = 0; n < _samples; ++n)
      accumulate(n);
  }
  else
  {
    for (auto n : batch)
    {
      if (n >= _samples)
        throw DimensionError("activation loss: batch index out of range");
      accumulate(n);
    }
  }
  for (std::size_t i = 0; i < live.size(); ++i)
  {
    if (!live[i])
      out.grad[i] = 0.0;
  }
  return out;
}

LossValue loss_activation(const LayerSpec &layer, const QuantConfig &cfg, const Tensor &inputs,
                          std::span<const double> soft)
{
  return ActivationProblem(layer, cfg, inputs).evaluate(soft);
}

double LayerResult::converged_fraction() const
{
  if (state.soft.empty())
    return 1.0;
  const auto n = std::count_if(state.soft.begin(), state.soft.end(),
                               [](double c) { return c <= 0.01 || c >= 0.99; });
  return static_cast<double>(n) / static_cast<double>(state.soft.size());
}

namespace
{

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Fisher-Yates with an explicit index rule so the order does not depend on the standard library.
void shuffle(std::vector<std::size_t> &order, std::mt19937_64 &rng)
{
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng() % i]);
}

class BatchCycler
{
public:
  BatchCycler(std::size_t samples, std::size_t batch, std::uint64_t seed)
    : _order(samples), _batch(std::min(batch, samples)), _rng(seed)
  {
    std::iota(_order.begin(), _order.end(), std::size_t{0});
    shuffle(_order, _rng);
  }

  std::span<const std::size_t> next()
  {
    if (_pos + _batch > _order.size())
    {
      shuffle(_order, _rng);
      _pos = 0;
    }
    std::span<const std::size_t> out(_order.data() + _pos, _batch);
    _pos += _batch;
    return out;
  }

private:
  std::vector<std::size_t> _order;
  std::size_t _batch;
  std::size_t _pos = 0;
  std::mt19937_64 _rng;
};

} // namespace

LayerResult optimize_layer(const LayerSpec &layer, const QuantConfig &cfg, const Tensor &inputs,
                           const EfrapConfig &efrap, std::size_t layer_index)
{
  efrap.validate();
  auto nearest = quantize_nearest(layer.weight, cfg);
  LayerResult result;
  result.layer = layer_index;
  result.config = cfg;
  result.state = std::move(nearest.state);
  auto &st = result.state;
  std::vector<double> &c = st.soft;

  const ActivationProblem activation(layer, cfg, inputs);
  if (activation.samples() == 0 && efrap.lambda_a > 0.0 && efrap.iterations > 0)
    throw Error(ExitCode::kBadInput, "calibration", "efrap: no calibration activations for layer " +
                                                      std::to_string(layer_index));
  BatchCycler batches(activation.samples(), efrap.batch_size,
                      splitmix64(efrap.seed ^ splitmix64(static_cast<std::uint64_t>(layer_index))));

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  std::vector<double> m(c.size(), 0.0), v(c.size(), 0.0);
  double beta1_t = 1.0, beta2_t = 1.0;
  std::vector<double> history;

  for (std::size_t it = 1; it <= efrap.iterations; ++it)
  {
    TracePoint tp{it, 0.0, 0.0, 0.0, 0.0};
    std::vector<double> grad(c.size(), 0.0);
    auto add_term = [&](const LossValue &term, double weight, double &slot) {
      slot = term.value;
      tp.total += weight * term.value;
      for (std::size_t i = 0; i < grad.size(); ++i)
        grad[i] += weight * term.grad[i];
    };
    if (efrap.lambda_f > 0.0)
      add_term(loss_flip(st.error, c, st.flipped, efrap.ce_epsilon), efrap.lambda_f, tp.flip);
    if (efrap.lambda_a > 0.0)
      add_term(activation.evaluate(c, batches.next()), efrap.lambda_a, tp.activation);
    if (efrap.lambda_p > 0.0)
      add_term(loss_penalty(c), efrap.lambda_p, tp.penalty);
    if (!std::isfinite(tp.total))
      throw NumericError("diverged", "efrap: loss is not finite at iteration " + std::to_string(it) + " of layer " +
                                       std::to_string(layer_index));

    beta1_t *= kBeta1;
    beta2_t *= kBeta2;
    for (std::size_t i = 0; i < c.size(); ++i)
    {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      const double mhat = m[i] / (1.0 - beta1_t);
      const double vhat = v[i] / (1.0 - beta2_t);
      c[i] = std::clamp(c[i] - efrap.learning_rate * mhat / (std::sqrt(vhat) + kAdamEps), 0.0, 1.0);
    }
    result.iterations_run = it;

    const bool last = it == efrap.iterations;
    if (efrap.trace_every > 0 && (it % efrap.trace_every == 0 || it == 1 || last))
      result.trace.push_back(tp);
    if (efrap.early_stop)
    {
      history.push_back(tp.total);
      if (history.size() > 100)
      {
        const double before = history[history.size() - 101];
        if (std::fabs(tp.total - before) <= 1e-6 * std::max(std::fabs(before), 1e-12))
        {
          if (efrap.trace_every > 0 && !last && (result.trace.empty() || result.trace.back().iteration != it))
            result.trace.push_back(tp);
          break;
        }
      }
    }
  }
  st.learned = threshold_strategy(c);
  return result;
}

EfrapResult efrap_quantize(const ModelGraph &graph, const Tensor &calibration, int bits, const EfrapConfig &efrap)
{
  efrap.validate();
  validate(graph);
  if (calibration.rank() == 0 || calibration.dim(0) == 0)
    throw Error(ExitCode::kBadInput, "calibration", "efrap: calibration set is empty");
  const auto weighted = graph.weighted_layers();
  const auto inputs = capture_activations(graph, calibration, weighted);

  std::vector<LayerResult> results(weighted.size());
  auto solve = [&](std::size_t t) {
    const auto &layer = graph.layers[weighted[t]];
    const QuantConfig cfg = make_config(layer.weight, bits, efrap.scheme);
    results[t] = optimize_layer(layer, cfg, inputs[t], efrap, weighted[t]);
  };

  if (efrap.parallel_layers && weighted.size() > 1)
  {
    std::size_t threads = efrap.threads != 0 ? efrap.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, weighted.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
    {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < weighted.size(); t = next++)
        {
          try
          {
            solve(t);
          }
          catch (...)
          {
            std::lock_guard lock(failure_mutex);
            if (!failure)
              failure = std::current_exception();
          }
        }
      });
    }
    for (auto &th : pool)
      th.join();
    if (failure)
      std::rethrow_exception(failure);
  }
  else
  {
    for (std::size_t t = 0; t < weighted.size(); ++t)
      solve(t);
  }

  EfrapResult out{graph, std::move(results)};
  for (const auto &r : out.layers)
  {
    auto &layer = out.graph.layers[r.layer];
    layer.weight = quantize_with_strategy(graph.layers[r.layer].weight, r.config, r.state.learned);
    layer.quant = LayerQuant{r.config, r.state.learned};
  }
  out.graph.record = QuantRecord{"efrap", bits, efrap.seed};
  return out;
}

} // namespace quantguard
