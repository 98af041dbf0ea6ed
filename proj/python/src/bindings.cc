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
#include "quantguard/model_io.h"
#include "quantguard/pipeline.h"
#include "quantguard/planted_qcb.h"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace quantguard;

namespace
{

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray &a)
{
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor &t)
{
  FloatArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

template <typename T> py::array_t<T> to_array(const std::vector<T> &v)
{
  py::array_t<T> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::optional<Tensor> optional_tensor(const std::optional<FloatArray> &a)
{
  if (!a)
    return std::nullopt;
  return to_tensor(*a);
}

Dataset make_dataset(const FloatArray &samples, const std::optional<IntArray> &labels,
                     std::optional<std::int32_t> trigger_target, std::int32_t num_classes)
{
  Dataset d;
  d.samples = to_tensor(samples);
  if (labels)
    d.labels = std::vector<std::int32_t>(labels->data(), labels->data() + labels->size());
  d.trigger_target = trigger_target;
  d.num_classes = num_classes;
  validate(d);
  return d;
}

WeightPacking parse_packing(const std::string &name)
{
  if (name == "none")
    return WeightPacking::kNone;
  if (name == "int8")
    return WeightPacking::kInt8;
  if (name == "int4")
    return WeightPacking::kInt4;
  throw ContractError("packing must be 'none', 'int8' or 'int4'");
}

py::dict certificate_dict(const PlantedCertificate &c)
{
  py::dict d;
  d["fp_cda"] = c.fp_cda;
  d["fp_asr"] = c.fp_asr;
  d["nearest_cda"] = c.nearest_cda;
  d["nearest_asr"] = c.nearest_asr;
  d["trigger_removed_asr"] = c.trigger_removed_asr;
  d["flipped_asr"] = c.flipped_asr;
  d["passes"] = c.passes();
  return d;
}

} // namespace

PYBIND11_MODULE(_quantguard, m)
{
  m.doc() = "Post-training weight quantization with backdoor-removing rounding";

  auto base = py::register_exception<Error>(m, "QuantGuardError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  py::enum_<ScaleScheme>(m, "ScaleScheme")
    .value("SYMMETRIC_MAXABS", ScaleScheme::kSymmetricMaxAbs)
    .value("OMSE", ScaleScheme::kOmse);

  py::class_<Dataset>(m, "Dataset")
    .def(py::init(&make_dataset), py::arg("samples"), py::arg("labels") = std::nullopt,
         py::arg("trigger_target") = std::nullopt, py::arg("num_classes") = 0)
    .def_property_readonly("samples", [](const Dataset &d) { return to_array(d.samples); })
    .def_property_readonly("labels",
                           [](const Dataset &d) -> py::object {
                             if (!d.labels)
                               return py::none();
                             return to_array(*d.labels);
                           })
    .def_readonly("trigger_target", &Dataset::trigger_target)
    .def_readonly("num_classes", &Dataset::num_classes)
    .def("__len__", &Dataset::size);

  py::class_<ModelGraph>(m, "Model")
    .def(py::init([](std::vector<std::size_t> input_shape) {
           ModelGraph g;
           g.input_shape = std::move(input_shape);
           return g;
         }),
         py::arg("input_shape"))
    .def_readonly("input_shape", &ModelGraph::input_shape)
    .def(
      "add_linear",
      [](ModelGraph &g, const FloatArray &w, const std::optional<FloatArray> &b) -> ModelGraph & {
        g.layers.push_back(LayerSpec::linear(to_tensor(w), optional_tensor(b)));
        return g;
      },
      py::arg("weight"), py::arg("bias") = std::nullopt, py::return_value_policy::reference_internal)
    .def(
      "add_conv2d",
      [](ModelGraph &g, const FloatArray &w, const std::optional<FloatArray> &b, std::size_t stride,
         std::size_t padding) -> ModelGraph & {
        g.layers.push_back(LayerSpec::conv2d(to_tensor(w), optional_tensor(b), stride, padding));
        return g;
      },
      py::arg("weight"), py::arg("bias") = std::nullopt, py::arg("stride") = 1, py::arg("padding") = 0,
      py::return_value_policy::reference_internal)
    .def(
      "add_relu",
      [](ModelGraph &g) -> ModelGraph & {
        g.layers.push_back(LayerSpec::relu());
        return g;
      },
      py::return_value_policy::reference_internal)
    .def(
      "add_maxpool",
      [](ModelGraph &g, std::size_t k, std::size_t s) -> ModelGraph & {
        g.layers.push_back(LayerSpec::max_pool(k, s));
        return g;
      },
      py::arg("kernel"), py::arg("stride"), py::return_value_policy::reference_internal)
    .def(
      "add_avgpool",
      [](ModelGraph &g, std::size_t k, std::size_t s) -> ModelGraph & {
        g.layers.push_back(LayerSpec::avg_pool(k, s));
        return g;
      },
      py::arg("kernel"), py::arg("stride"), py::return_value_policy::reference_internal)
    .def(
      "add_flatten",
      [](ModelGraph &g) -> ModelGraph & {
        g.layers.push_back(LayerSpec::flatten());
        return g;
      },
      py::return_value_policy::reference_internal)
    .def(
      "add_residual",
      [](ModelGraph &g, std::size_t source) -> ModelGraph & {
        g.layers.push_back(LayerSpec::residual_add(source));
        return g;
      },
      py::arg("source"), py::return_value_policy::reference_internal)
    .def("validate", [](const ModelGraph &g) { validate(g); })
    .def_property_readonly("layer_types",
                           [](const ModelGraph &g) {
                             std::vector<std::string> out;
                             for (const auto &l : g.layers)
                               out.push_back(to_string(l.kind));
                             return out;
                           })
    .def("weight", [](const ModelGraph &g, std::size_t i) { return to_array(g.layers.at(i).weight); })
    .def("strategy",
         [](const ModelGraph &g, std::size_t i) -> py::object {
           const auto &l = g.layers.at(i);
           if (!l.quant)
             return py::none();
           return to_array(l.quant->strategy);
         })
    .def("scale",
         [](const ModelGraph &g, std::size_t i) -> py::object {
           const auto &l = g.layers.at(i);
           if (!l.quant)
             return py::none();
           return py::float_(l.quant->config.scale);
         })
    .def_property_readonly("method", [](const ModelGraph &g) -> py::object {
      if (!g.record)
        return py::none();
      return py::str(g.record->method);
    });

  m.def("load_model", [](const std::filesystem::path &p) { return load_model(p); });
  m.def(
    "save_model",
    [](const ModelGraph &g, const std::filesystem::path &p, const std::string &packing) {
      save_model(g, p, parse_packing(packing));
    },
    py::arg("model"), py::arg("path"), py::arg("packing") = "none");
  m.def("load_dataset", [](const std::filesystem::path &p) { return load_dataset(p); });
  m.def("save_dataset", [](const Dataset &d, const std::filesystem::path &p) { save_dataset(d, p); });

  m.def(
    "forward",
    [](const ModelGraph &g, const FloatArray &batch, std::optional<int> bits) {
      const ExecutionMode mode = bits ? ExecutionMode::nearest(g, *bits) : ExecutionMode::stored(g);
      return to_array(forward(g, to_tensor(batch), mode));
    },
    py::arg("model"), py::arg("batch"), py::arg("bits") = std::nullopt,
    "Logits of the stored model, or of its nearest-rounded weights when `bits` is given.");

  m.def(
    "quantize_nearest",
    [](const FloatArray &w, int bits) {
      const Tensor t = to_tensor(w);
      const QuantConfig cfg = make_config(t, bits);
      auto r = quantize_nearest(t, cfg);
      py::dict d;
      d["quantized"] = to_array(r.quantized);
      d["scale"] = cfg.scale;
      d["n"] = cfg.lower;
      d["p"] = cfg.upper;
      d["nearest"] = to_array(r.state.nearest).reshape(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
      d["error"] = to_array(r.state.error).reshape(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
      d["soft"] = to_array(r.state.soft).reshape(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
      return d;
    },
    py::arg("weight"), py::arg("bits"));

  m.def("quantize_nearest_model", &quantize_graph_nearest, py::arg("model"), py::arg("bits"),
        py::arg("scheme") = ScaleScheme::kSymmetricMaxAbs, py::arg("omse_grid") = 256);

  m.def(
    "efrap_quantize",
    [](const ModelGraph &g, const Dataset &calib, int bits, double lambda_a, double lambda_p, double lambda_f,
       std::size_t iterations, double learning_rate, std::size_t batch_size, std::uint64_t seed) {
      EfrapConfig cfg;
      cfg.lambda_a = lambda_a;
      cfg.lambda_p = lambda_p;
      cfg.lambda_f = lambda_f;
      cfg.iterations = iterations;
      cfg.learning_rate = learning_rate;
      cfg.batch_size = batch_size;
      cfg.seed = seed;
      py::gil_scoped_release release;
      return efrap_quantize(g, calib.samples, bits, cfg).graph;
    },
    py::arg("model"), py::arg("calib"), py::arg("bits"), py::arg("lambda_a") = 1.0, py::arg("lambda_p") = 1.0,
    py::arg("lambda_f") = 1.0, py::arg("iterations") = 10000, py::arg("learning_rate") = 1e-3,
    py::arg("batch_size") = 32, py::arg("seed") = 0);

  m.def(
    "evaluate",
    [](const ModelGraph &g, const Dataset &clean, const Dataset &triggered, std::int32_t target) {
      const Evaluation e = evaluate_graph(g, clean, triggered, target);
      return py::make_tuple(e.cda, e.asr);
    },
    py::arg("model"), py::arg("clean"), py::arg("triggered"), py::arg("target"),
    "(CDA, ASR) in percent for the stored model.");
  m.def("dtm", &dtm, py::arg("cda"), py::arg("asr_before"), py::arg("asr_after"), py::arg("alpha") = 0.5);

  m.def(
    "build_planted_qcb",
    [](int bits, std::size_t input_dim, int classes, std::uint64_t seed) {
      PlantedQcb f = build_planted_qcb(bits, input_dim, classes, seed);
      py::dict d;
      d["model"] = std::move(f.graph);
      d["clean"] = std::move(f.clean);
      d["triggered"] = std::move(f.triggered);
      d["untriggered"] = std::move(f.untriggered);
      d["calibration"] = std::move(f.calibration);
      d["target"] = f.target;
      d["certificate"] = certificate_dict(f.certificate);
      return d;
    },
    py::arg("bits"), py::arg("input_dim") = 16, py::arg("classes") = 2, py::arg("seed") = 0);

  m.attr("CONTAINER_VERSION") = kContainerVersion;
}
