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

#include "quantguard/metrics.h"

#include "quantguard/errors.h"

#include <json.hpp>

#include <cstdio>

namespace quantguard
{

double clean_accuracy(std::span<const std::size_t> predictions, std::span<const std::int32_t> labels)
{
  if (predictions.size() != labels.size())
    throw DimensionError("clean_accuracy: prediction and label counts differ");
  if (labels.empty())
    throw ContractError("clean_accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    correct += predictions[i] == static_cast<std::size_t>(labels[i]);
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

double attack_success_rate(std::span<const std::size_t> predictions, std::span<const std::int32_t> labels,
                           std::int32_t target)
{
  if (predictions.size() != labels.size())
    throw DimensionError("attack_success_rate: prediction and label counts differ");
  std::size_t counted = 0, hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
  {
    if (labels[i] == target)
      continue;
    ++counted;
    hits += predictions[i] == static_cast<std::size_t>(target);
  }
  if (counted == 0)
    throw Error(ExitCode::kBadInput, "undefined_asr", "attack_success_rate: every sample already has the target label");
  return 100.0 * static_cast<double>(hits) / static_cast<double>(counted);
}

namespace
{

const std::vector<std::int32_t> &require_labels(const Dataset &data, const char *what)
{
  if (!data.labels)
    throw ContractError(std::string(what) + ": dataset has no labels");
  return *data.labels;
}

} // namespace

double clean_accuracy(const ModelGraph &graph, const ExecutionMode &mode, const Dataset &data)
{
  const auto &labels = require_labels(data, "clean_accuracy");
  return clean_accuracy(argmax_rows(forward(graph, data.samples, mode)), labels);
}

double attack_success_rate(const ModelGraph &graph, const ExecutionMode &mode, const Dataset &triggered,
                           std::int32_t target)
{
  const auto &labels = require_labels(triggered, "attack_success_rate");
  return attack_success_rate(argmax_rows(forward(graph, triggered.samples, mode)), labels, target);
}

double dtm(double cda, double asr_before, double asr_after, double alpha)
{
  return (1.0 - alpha) * cda - alpha * (asr_after - asr_before);
}

EvalReport make_report(std::string model, std::string method, int bits, double cda, double asr,
                       std::optional<double> asr_before, std::uint64_t seed, double alpha)
{
  EvalReport r;
  r.model = std::move(model);
  r.method = std::move(method);
  r.bits = bits;
  r.cda = cda;
  r.asr = asr;
  r.asr_before = asr_before.value_or(asr);
  r.delta_asr = r.asr - r.asr_before;
  r.alpha = alpha;
  r.dtm = dtm(cda, r.asr_before, asr, alpha);
  r.seed = seed;
  return r;
}

std::string report_csv_header() { return "model,method,bits,cda,asr,delta_asr,dtm,seed"; }

namespace
{

std::string csv_field(const std::string &s)
{
  if (s.find_first_of(",\"\n") == std::string::npos)
    return s;
  std::string out = "\"";
  for (char ch : s)
  {
    if (ch == '"')
      out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string fixed(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

} // namespace

std::string report_csv_row(const EvalReport &r)
{
  return csv_field(r.model) + "," + csv_field(r.method) + "," + std::to_string(r.bits) + "," + fixed(r.cda) + "," +
         fixed(r.asr) + "," + fixed(r.delta_asr) + "," + fixed(r.dtm) + "," + std::to_string(r.seed);
}

std::string report_json(const EvalReport &r)
{
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["method"] = r.method;
  j["bits"] = r.bits;
  j["cda"] = r.cda;
  j["asr"] = r.asr;
  j["delta_asr"] = r.delta_asr;
  j["dtm"] = r.dtm;
  j["seed"] = r.seed;
  j["asr_before"] = r.asr_before;
  j["alpha"] = r.alpha;
  return j.dump(2);
}

} // namespace quantguard
