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

#ifndef QUANTGUARD_METRICS_H
#define QUANTGUARD_METRICS_H

#include "quantguard/inference.h"

#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace quantguard
{

// All metrics are percentages in [0, 100].

double clean_accuracy(std::span<const std::size_t> predictions, std::span<const std::int32_t> labels);

// Samples whose label already equals `target` are excluded; throws when none remain.
double attack_success_rate(std::span<const std::size_t> predictions, std::span<const std::int32_t> labels,
                           std::int32_t target);

double clean_accuracy(const ModelGraph &graph, const ExecutionMode &mode, const Dataset &data);
double attack_success_rate(const ModelGraph &graph, const ExecutionMode &mode, const Dataset &triggered,
                           std::int32_t target);

// (1 - alpha) * cda - alpha * (asr_after - asr_before)
double dtm(double cda, double asr_before, double asr_after, double alpha = 0.5);

struct EvalReport
{
  std::string model;
  std::string method;
  int bits = 0;
  double cda = 0.0;
  double asr = 0.0;
  double asr_before = 0.0;
  double delta_asr = 0.0;
  double dtm = 0.0;
  double alpha = 0.5;
  std::uint64_t seed = 0;
};

// Fills delta_asr and dtm; without `asr_before` the attack is treated as unchanged (delta 0).
EvalReport make_report(std::string model, std::string method, int bits, double cda, double asr,
                       std::optional<double> asr_before, std::uint64_t seed, double alpha = 0.5);

// Columns: model, method, bits, cda, asr, delta_asr, dtm, seed.
std::string report_csv_header();
std::string report_csv_row(const EvalReport &report);
std::string report_json(const EvalReport &report);

} // namespace quantguard

#endif // QUANTGUARD_METRICS_H
