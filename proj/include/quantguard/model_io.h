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

#ifndef QUANTGUARD_MODEL_IO_H
#define QUANTGUARD_MODEL_IO_H

#include "quantguard/model.h"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace quantguard
{

// Container layout (all integers little-endian):
//   magic[4] "EFQM" | "EFQD"
//   u16 version (= 1)
//   u32 header length H
//   H bytes of UTF-8 JSON header
//   tensor blobs, offsets relative to the end of the header
//   u32 CRC32 of every preceding byte
// See docs/format.md for the header schema.

inline constexpr std::uint16_t kContainerVersion = 1;

enum class WeightPacking
{
  kNone, // f32 weights
  kInt8, // i8 codes, quantized layers only
  kInt4, // two i4 codes per byte, low nibble first
};

std::vector<std::uint8_t> encode_model(const ModelGraph &graph, WeightPacking packing = WeightPacking::kNone);
ModelGraph decode_model(const std::vector<std::uint8_t> &bytes);

std::vector<std::uint8_t> encode_dataset(const Dataset &data);
Dataset decode_dataset(const std::vector<std::uint8_t> &bytes);

void save_model(const ModelGraph &graph, const std::filesystem::path &path,
                WeightPacking packing = WeightPacking::kNone);
ModelGraph load_model(const std::filesystem::path &path);

void save_dataset(const Dataset &data, const std::filesystem::path &path);
Dataset load_dataset(const std::filesystem::path &path);

std::vector<std::uint8_t> read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, const std::vector<std::uint8_t> &bytes);

// Encode 0/1 strategies as the '0'/'1' text stored in headers.
std::string strategy_to_text(const Strategy &strategy);
Strategy strategy_from_text(const std::string &text);

} // namespace quantguard

#endif // QUANTGUARD_MODEL_IO_H
