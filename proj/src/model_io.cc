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

#include "quantguard/model_io.h"

#include "quantguard/errors.h"

#include <json.hpp>
#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace quantguard
{

using json = nlohmann::ordered_json;
using Reason = FormatError::Reason;

namespace
{

constexpr char kModelMagic[4] = {'E', 'F', 'Q', 'M'};
constexpr char kDatasetMagic[4] = {'E', 'F', 'Q', 'D'};
constexpr std::size_t kPrefixSize = 4 + 2 + 4;

void put_u16(std::vector<std::uint8_t> &out, std::uint16_t v)
{
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v)
{
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const std::uint8_t *p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::uint32_t get_u32(const std::uint8_t *p)
{
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t crc32_of(const std::uint8_t *data, std::size_t n)
{
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0)
  {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

// Byte length of `count` elements of `dtype`.
std::size_t dtype_nbytes(const std::string &dtype, std::size_t count)
{
  if (dtype == "f32" || dtype == "i32")
    return 4 * count;
  if (dtype == "i8")
    return count;
  if (dtype == "i4")
    return (count + 1) / 2;
  throw FormatError(Reason::kBadHeader, "unknown tensor dtype '" + dtype + "'");
}

class BlobWriter
{
public:
  json add_f32(const Tensor &t)
  {
    const std::size_t offset = _blob.size();
    for (float v : t.data())
      put_u32(_blob, std::bit_cast<std::uint32_t>(v));
    return describe("f32", t.shape(), offset);
  }

  json add_i32(const Shape &shape, const std::vector<std::int32_t> &values)
  {
    const std::size_t offset = _blob.size();
    for (auto v : values)
      put_u32(_blob, static_cast<std::uint32_t>(v));
    return describe("i32", shape, offset);
  }

  json add_i8(const Shape &shape, const std::vector<std::int32_t> &codes)
  {
    const std::size_t offset = _blob.size();
    for (auto c : codes)
      _blob.push_back(static_cast<std::uint8_t>(static_cast<std::int8_t>(c)));
    return describe("i8", shape, offset);
  }

  json add_i4(const Shape &shape, const std::vector<std::int32_t> &codes)
  {
    const std::size_t offset = _blob.size();
    for (std::size_t i = 0; i < codes.size(); i += 2)
    {
      const auto lo = static_cast<std::uint8_t>(codes[i] & 0x0f);
      const auto hi = static_cast<std::uint8_t>(i + 1 < codes.size() ? (codes[i + 1] & 0x0f) : 0);
      _blob.push_back(static_cast<std::uint8_t>(lo | (hi << 4)));
    }
    return describe("i4", shape, offset);
  }

  const std::vector<std::uint8_t> &bytes() const { return _blob; }

private:
  json describe(const char *dtype, const Shape &shape, std::size_t offset) const
  {
    json d;
    d["dtype"] = dtype;
    d["shape"] = shape;
    d["offset"] = offset;
    d["nbytes"] = _blob.size() - offset;
    return d;
  }

  std::vector<std::uint8_t> _blob;
};

std::vector<std::uint8_t> assemble(const char (&magic)[4], const json &header, const std::vector<std::uint8_t> &blob)
{
  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(kPrefixSize + text.size() + blob.size() + 4);
  out.insert(out.end(), magic, magic + 4);
  put_u16(out, kContainerVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  put_u32(out, crc32_of(out.data(), out.size()));
  return out;
}

struct Container
{
  json header;
  const std::uint8_t *blob = nullptr;
  std::size_t blob_size = 0;
};

// Collects (offset + nbytes) over every tensor descriptor in the header.
void max_extent(const json &node, std::size_t &extent)
{
  if (node.is_object())
  {
    if (node.contains("dtype") && node.contains("offset") && node.contains("nbytes"))
    {
      const auto off = node["offset"].get<std::size_t>();
      const auto nb = node["nbytes"].get<std::size_t>();
      extent = std::max(extent, off + nb);
      return;
    }
    for (const auto &[k, v] : node.items())
      max_extent(v, extent);
  }
  else if (node.is_array())
  {
    for (const auto &v : node)
      max_extent(v, extent);
  }
}

Container open(const std::vector<std::uint8_t> &bytes, const char (&magic)[4])
{
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0)
    throw FormatError(Reason::kBadMagic, std::string("expected magic '") + std::string(magic, 4) + "'");
  if (bytes.size() < kPrefixSize)
    throw FormatError(Reason::kTruncated, "file ends inside the fixed prefix");
  const auto version = get_u16(bytes.data() + 4);
  if (version != kContainerVersion)
    throw FormatError(Reason::kVersionMismatch, "unsupported container version " + std::to_string(version));
  const std::size_t header_len = get_u32(bytes.data() + 6);
  if (bytes.size() < kPrefixSize + header_len + 4)
    throw FormatError(Reason::kTruncated, "file ends inside the JSON header");

  Container c;
  try
  {
    c.header = json::parse(bytes.begin() + kPrefixSize, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefixSize + header_len));
  }
  catch (const json::exception &e)
  {
    throw FormatError(Reason::kBadHeader, std::string("header is not valid JSON: ") + e.what());
  }
  if (!c.header.is_object())
    throw FormatError(Reason::kBadHeader, "header must be a JSON object");

  std::size_t extent = 0;
  try
  {
    max_extent(c.header, extent);
  }
  catch (const json::exception &e)
  {
    throw FormatError(Reason::kBadHeader, std::string("bad tensor descriptor: ") + e.what());
  }
  const std::size_t available = bytes.size() - kPrefixSize - header_len - 4;
  if (extent > available)
    throw FormatError(Reason::kTruncated, "tensor region declares " + std::to_string(extent) + " bytes but only " +
                                            std::to_string(available) + " are present");
  const std::uint32_t stored = get_u32(bytes.data() + bytes.size() - 4);
  if (stored != crc32_of(bytes.data(), bytes.size() - 4))
    throw FormatError(Reason::kChecksumMismatch, "CRC32 mismatch");
  if (extent != available)
    throw FormatError(Reason::kBadHeader, "tensor region has " + std::to_string(available - extent) +
                                            " unreferenced trailing bytes");
  c.blob = bytes.data() + kPrefixSize + header_len;
  c.blob_size = available;
  return c;
}

struct Descriptor
{
  std::string dtype;
  Shape shape;
  std::size_t offset;
  std::size_t nbytes;
};

Descriptor describe(const Container &c, const json &d, const std::string &what)
{
  Descriptor out;
  try
  {
    out.dtype = d.at("dtype").get<std::string>();
    out.shape = d.at("shape").get<Shape>();
    out.offset = d.at("offset").get<std::size_t>();
    out.nbytes = d.at("nbytes").get<std::size_t>();
  }
  catch (const json::exception &e)
  {
    throw FormatError(Reason::kBadHeader, what + ": " + e.what());
  }
  const std::size_t expected = dtype_nbytes(out.dtype, element_count(out.shape));
  if (out.nbytes != expected)
    throw FormatError(Reason::kShapeMismatch, what + ": declares " + std::to_string(out.nbytes) + " bytes, shape " +
                                                to_string(out.shape) + " needs " + std::to_string(expected));
  if (out.offset + out.nbytes > c.blob_size)
    throw FormatError(Reason::kTruncated, what + ": tensor extends past the data region");
  return out;
}

Tensor read_f32(const Container &c, const json &d, const std::string &what)
{
  const auto desc = describe(c, d, what);
  if (desc.dtype != "f32")
    throw FormatError(Reason::kBadHeader, what + ": expected f32 tensor");
  std::vector<float> values(element_count(desc.shape));
  const std::uint8_t *p = c.blob + desc.offset;
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = std::bit_cast<float>(get_u32(p + 4 * i));
  Tensor t(desc.shape, std::move(values));
  for (float v : t.data())
  {
    if (!std::isfinite(v))
      throw FormatError(Reason::kBadHeader, what + ": non-finite value");
  }
  return t;
}

std::vector<std::int32_t> read_codes(const Container &c, const Descriptor &desc)
{
  const std::size_t n = element_count(desc.shape);
  std::vector<std::int32_t> codes(n);
  const std::uint8_t *p = c.blob + desc.offset;
  if (desc.dtype == "i32")
  {
    for (std::size_t i = 0; i < n; ++i)
      codes[i] = static_cast<std::int32_t>(get_u32(p + 4 * i));
  }
  else if (desc.dtype == "i8")
  {
    for (std::size_t i = 0; i < n; ++i)
      codes[i] = static_cast<std::int8_t>(p[i]);
  }
  else if (desc.dtype == "i4")
  {
    for (std::size_t i = 0; i < n; ++i)
    {
      const int nibble = (i % 2 == 0) ? (p[i / 2] & 0x0f) : (p[i / 2] >> 4);
      codes[i] = nibble >= 8 ? nibble - 16 : nibble;
    }
  }
  else
  {
    throw FormatError(Reason::kBadHeader, "expected integer tensor, got " + desc.dtype);
  }
  return codes;
}

template <typename T> T field(const json &obj, const char *key, const std::string &what)
{
  try
  {
    return obj.at(key).get<T>();
  }
  catch (const json::exception &e)
  {
    throw FormatError(Reason::kBadHeader, what + ": field '" + key + "': " + e.what());
  }
}

json quant_to_json(const LayerQuant &q)
{
  json j;
  j["bits"] = q.config.bits;
  j["scale"] = q.config.scale;
  j["n"] = q.config.lower;
  j["p"] = q.config.upper;
  j["scheme"] = to_string(q.config.scheme);
  j["strategy"] = strategy_to_text(q.strategy);
  return j;
}

LayerQuant quant_from_json(const json &j, const std::string &what)
{
  LayerQuant q;
  q.config.bits = field<int>(j, "bits", what);
  q.config.scale = field<float>(j, "scale", what);
  q.config.lower = field<std::int32_t>(j, "n", what);
  q.config.upper = field<std::int32_t>(j, "p", what);
  try
  {
    q.config.scheme = parse_scale_scheme(field<std::string>(j, "scheme", what));
    q.strategy = strategy_from_text(field<std::string>(j, "strategy", what));
  }
  catch (const ContractError &e)
  {
    throw FormatError(Reason::kBadHeader, what + ": " + e.what());
  }
  return q;
}

} // namespace

std::string strategy_to_text(const Strategy &strategy)
{
  std::string s(strategy.size(), '0');
  for (std::size_t i = 0; i < strategy.size(); ++i)
    s[i] = strategy[i] ? '1' : '0';
  return s;
}

Strategy strategy_from_text(const std::string &text)
{
  Strategy out(text.size());
  for (std::size_t i = 0; i < text.size(); ++i)
  {
    if (text[i] != '0' && text[i] != '1')
      throw ContractError("strategy text must contain only '0' and '1'");
    out[i] = text[i] == '1' ? 1 : 0;
  }
  return out;
}

std::vector<std::uint8_t> encode_model(const ModelGraph &graph, WeightPacking packing)
{
  validate(graph);
  BlobWriter blob;
  json header;
  header["input_shape"] = graph.input_shape;
  json layers = json::array();
  for (std::size_t i = 0; i < graph.layers.size(); ++i)
  {
    const auto &l = graph.layers[i];
    json j;
    j["type"] = to_string(l.kind);
    switch (l.kind)
    {
      case LayerKind::kLinear:
        j["in"] = l.weight.dim(1);
        j["out"] = l.weight.dim(0);
        break;
      case LayerKind::kConv2d:
        j["in_channels"] = l.weight.dim(1);
        j["out_channels"] = l.weight.dim(0);
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["padding"] = l.padding;
        break;
      case LayerKind::kMaxPool:
      case LayerKind::kAvgPool:
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        break;
      case LayerKind::kResidualAdd:
        j["source"] = l.source;
        break;
      default:
        break;
    }
    if (l.is_weighted())
    {
      j["bias"] = l.bias.has_value();
      if (packing != WeightPacking::kNone && l.quant)
      {
        // Stored weights are already exact multiples of the scale.
        const auto &cfg = l.quant->config;
        if ((packing == WeightPacking::kInt8 && cfg.bits > 8) || (packing == WeightPacking::kInt4 && cfg.bits > 4))
          throw ContractError("layer " + std::to_string(i) + ": " + std::to_string(cfg.bits) +
                              "-bit codes do not fit the requested packing");
        std::vector<std::int32_t> codes(l.weight.size());
        for (std::size_t t = 0; t < codes.size(); ++t)
        {
          const double r = round_half_even(static_cast<double>(l.weight[t]) / cfg.scale);
          codes[t] = static_cast<std::int32_t>(std::clamp(r, static_cast<double>(cfg.lower), static_cast<double>(cfg.upper)));
        }
        j["weight"] = packing == WeightPacking::kInt8 ? blob.add_i8(l.weight.shape(), codes)
                                                      : blob.add_i4(l.weight.shape(), codes);
      }
      else
      {
        j["weight"] = blob.add_f32(l.weight);
      }
      if (l.bias)
        j["bias_tensor"] = blob.add_f32(*l.bias);
    }
    if (l.quant)
      j["quant"] = quant_to_json(*l.quant);
    layers.push_back(std::move(j));
  }
  header["layers"] = std::move(layers);
  if (graph.record)
  {
    json r;
    r["method"] = graph.record->method;
    r["bits"] = graph.record->bits;
    r["seed"] = graph.record->seed;
    header["record"] = std::move(r);
  }
  if (graph.activation_bits != 0)
  {
    json a;
    a["bits"] = graph.activation_bits;
    json ranges = json::array();
    for (const auto &r : graph.activation_ranges)
      ranges.push_back({r.min, r.max});
    a["ranges"] = std::move(ranges);
    header["activation"] = std::move(a);
  }
  return assemble(kModelMagic, header, blob.bytes());
}

ModelGraph decode_model(const std::vector<std::uint8_t> &bytes)
{
  const Container c = open(bytes, kModelMagic);
  const json &h = c.header;
  ModelGraph g;
  g.input_shape = field<Shape>(h, "input_shape", "model");
  const auto layers = field<json>(h, "layers", "model");
  if (!layers.is_array())
    throw FormatError(Reason::kBadHeader, "model: 'layers' must be an array");
  for (std::size_t i = 0; i < layers.size(); ++i)
  {
    const json &j = layers[i];
    const std::string what = "layer " + std::to_string(i);
    LayerSpec l;
    try
    {
      l.kind = parse_layer_kind(field<std::string>(j, "type", what));
    }
    catch (const ContractError &e)
    {
      throw FormatError(Reason::kBadHeader, what + ": " + e.what());
    }
    switch (l.kind)
    {
      case LayerKind::kConv2d:
        l.kernel = field<std::size_t>(j, "kernel", what);
        l.stride = field<std::size_t>(j, "stride", what);
        l.padding = field<std::size_t>(j, "padding", what);
        break;
      case LayerKind::kMaxPool:
      case LayerKind::kAvgPool:
        l.kernel = field<std::size_t>(j, "kernel", what);
        l.stride = field<std::size_t>(j, "stride", what);
        break;
      case LayerKind::kResidualAdd:
        l.source = field<std::size_t>(j, "source", what);
        break;
      default:
        break;
    }
    if (j.contains("quant"))
      l.quant = quant_from_json(j["quant"], what);
    if (l.is_weighted())
    {
      const json wd = field<json>(j, "weight", what);
      const auto desc = describe(c, wd, what + " weight");
      if (desc.dtype == "f32")
      {
        l.weight = read_f32(c, wd, what + " weight");
      }
      else
      {
        if (!l.quant)
          throw FormatError(Reason::kBadHeader, what + ": packed weights need quantization metadata");
        try
        {
          l.weight = dequantize(desc.shape, read_codes(c, desc), l.quant->config);
        }
        catch (const Error &e)
        {
          throw FormatError(Reason::kBadHeader, what + ": " + e.what());
        }
      }
      if (field<bool>(j, "bias", what))
        l.bias = read_f32(c, field<json>(j, "bias_tensor", what), what + " bias");
      // Declared sizes must agree with the tensor actually stored.
      if (l.kind == LayerKind::kLinear &&
          (l.weight.rank() != 2 || field<std::size_t>(j, "in", what) != l.weight.dim(1) ||
           field<std::size_t>(j, "out", what) != l.weight.dim(0)))
        throw FormatError(Reason::kShapeMismatch, what + ": in/out disagree with weight shape");
      if (l.kind == LayerKind::kConv2d &&
          (l.weight.rank() != 4 || field<std::size_t>(j, "in_channels", what) != l.weight.dim(1) ||
           field<std::size_t>(j, "out_channels", what) != l.weight.dim(0)))
        throw FormatError(Reason::kShapeMismatch, what + ": channel counts disagree with weight shape");
    }
    g.layers.push_back(std::move(l));
  }
  if (h.contains("record"))
  {
    const json &r = h["record"];
    g.record = QuantRecord{field<std::string>(r, "method", "record"), field<int>(r, "bits", "record"),
                           field<std::uint64_t>(r, "seed", "record")};
  }
  if (h.contains("activation"))
  {
    const json &a = h["activation"];
    g.activation_bits = field<int>(a, "bits", "activation");
    for (const auto &r : field<json>(a, "ranges", "activation"))
    {
      if (!r.is_array() || r.size() != 2)
        throw FormatError(Reason::kBadHeader, "activation range must be [min, max]");
      g.activation_ranges.push_back({r[0].get<float>(), r[1].get<float>()});
    }
  }
  try
  {
    validate(g);
  }
  catch (const Error &e)
  {
    throw FormatError(Reason::kShapeMismatch, std::string("model failed validation: ") + e.what());
  }
  return g;
}

std::vector<std::uint8_t> encode_dataset(const Dataset &data)
{
  validate(data);
  BlobWriter blob;
  json header;
  header["samples"] = blob.add_f32(data.samples);
  if (data.labels)
    header["labels"] = blob.add_i32({data.labels->size()}, *data.labels);
  header["num_classes"] = data.num_classes;
  if (data.trigger_target)
    header["trigger_target"] = *data.trigger_target;
  return assemble(kDatasetMagic, header, blob.bytes());
}

Dataset decode_dataset(const std::vector<std::uint8_t> &bytes)
{
  const Container c = open(bytes, kDatasetMagic);
  const json &h = c.header;
  Dataset d;
  d.samples = read_f32(c, field<json>(h, "samples", "dataset"), "samples");
  if (h.contains("labels"))
  {
    const auto desc = describe(c, h["labels"], "labels");
    if (desc.dtype != "i32")
      throw FormatError(Reason::kBadHeader, "labels must be i32");
    d.labels = read_codes(c, desc);
  }
  d.num_classes = field<std::int32_t>(h, "num_classes", "dataset");
  if (h.contains("trigger_target"))
    d.trigger_target = field<std::int32_t>(h, "trigger_target", "dataset");
  try
  {
    validate(d);
  }
  catch (const Error &e)
  {
    throw FormatError(Reason::kShapeMismatch, std::string("dataset failed validation: ") + e.what());
  }
  return d;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError(Reason::kIo, "cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path &path, const std::vector<std::uint8_t> &bytes)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw FormatError(Reason::kIo, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw FormatError(Reason::kIo, "short write to '" + path.string() + "'");
}

void save_model(const ModelGraph &graph, const std::filesystem::path &path, WeightPacking packing)
{
  write_file(path, encode_model(graph, packing));
}

ModelGraph load_model(const std::filesystem::path &path) { return decode_model(read_file(path)); }

void save_dataset(const Dataset &data, const std::filesystem::path &path) { write_file(path, encode_dataset(data)); }

Dataset load_dataset(const std::filesystem::path &path) { return decode_dataset(read_file(path)); }

} // namespace quantguard
