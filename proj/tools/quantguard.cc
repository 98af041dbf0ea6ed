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

#include "quantguard/errors.h"
#include "quantguard/inference.h"
#include "quantguard/model_io.h"
#include "quantguard/pipeline.h"
#include "quantguard/planted_qcb.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace quantguard;

namespace
{

constexpr const char *kToolVersion = "0.1.0";

struct QuantizeArgs
{
  std::string model;
  std::string calib;
  int bits = 8;
  std::string method = "nearest";
  double fraction = 0.0;
  std::string direction = "max";
  std::string scope = "per-layer";
  double lambda_a = 1.0;
  double lambda_p = 1.0;
  double lambda_f = 1.0;
  std::size_t iters = 10000;
  double lr = 1e-3;
  std::size_t batch = 32;
  bool early_stop = false;
  bool parallel_layers = false;
  std::size_t omse_grid = 256;
  int act_bits = 0;
  std::string act_calib = "after";
  std::uint64_t seed = 0;
  bool pack_int = false;
  std::string out;
  std::string manifest;
};

json to_json(const QuantizeArgs &a)
{
  return json{{"model", a.model},
              {"calib", a.calib},
              {"bits", a.bits},
              {"method", a.method},
              {"fraction", a.fraction},
              {"direction", a.direction},
              {"scope", a.scope},
              {"lambda_a", a.lambda_a},
              {"lambda_p", a.lambda_p},
              {"lambda_f", a.lambda_f},
              {"iters", a.iters},
              {"lr", a.lr},
              {"batch", a.batch},
              {"early_stop", a.early_stop},
              {"parallel_layers", a.parallel_layers},
              {"omse_grid", a.omse_grid},
              {"act_bits", a.act_bits},
              {"act_calib", a.act_calib},
              {"seed", a.seed},
              {"pack_int", a.pack_int},
              {"out", a.out},
              {"manifest", a.manifest}};
}

QuantizeArgs quantize_args_from_json(const json &j)
{
  QuantizeArgs a;
  try
  {
    a.model = j.at("model").get<std::string>();
    a.calib = j.at("calib").get<std::string>();
    a.bits = j.at("bits").get<int>();
    a.method = j.at("method").get<std::string>();
    a.fraction = j.at("fraction").get<double>();
    a.direction = j.at("direction").get<std::string>();
    a.scope = j.at("scope").get<std::string>();
    a.lambda_a = j.at("lambda_a").get<double>();
    a.lambda_p = j.at("lambda_p").get<double>();
    a.lambda_f = j.at("lambda_f").get<double>();
    a.iters = j.at("iters").get<std::size_t>();
    a.lr = j.at("lr").get<double>();
    a.batch = j.at("batch").get<std::size_t>();
    a.early_stop = j.at("early_stop").get<bool>();
    a.parallel_layers = j.at("parallel_layers").get<bool>();
    a.omse_grid = j.at("omse_grid").get<std::size_t>();
    a.act_bits = j.at("act_bits").get<int>();
    a.act_calib = j.at("act_calib").get<std::string>();
    a.seed = j.at("seed").get<std::uint64_t>();
    a.pack_int = j.at("pack_int").get<bool>();
    a.out = j.at("out").get<std::string>();
    a.manifest = j.at("manifest").get<std::string>();
  }
  catch (const json::exception &e)
  {
    throw ContractError(std::string("manifest arguments are incomplete: ") + e.what());
  }
  return a;
}

std::size_t thread_cap()
{
  const char *env = std::getenv("QUANTGUARD_THREADS");
  if (env == nullptr || *env == '\0')
    return 0;
  char *end = nullptr;
  const unsigned long v = std::strtoul(env, &end, 10);
  if (*end != '\0' || v == 0)
    throw ContractError("QUANTGUARD_THREADS must be a positive integer");
  return v;
}

void write_text(const fs::path &path, const std::string &text)
{
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  write_file(path, bytes);
}

std::string default_manifest(const std::string &out) { return out + ".manifest.json"; }

void run_quantize(QuantizeArgs a)
{
  if (a.manifest.empty())
    a.manifest = default_manifest(a.out);
  const Method method = parse_method(a.method);
  positive_clip(a.bits);
  if (a.act_bits != 0)
    positive_clip(a.act_bits);
  if (a.act_calib != "after" && a.act_calib != "before")
    throw ContractError("--act-calib must be 'after' or 'before'");

  const ModelGraph graph = load_model(a.model);
  std::optional<Dataset> calib;
  if (!a.calib.empty())
    calib = load_dataset(a.calib);
  if ((method == Method::kEfrap || a.act_bits != 0) && !calib)
    throw ContractError("--calib is required for method efrap and for activation quantization");

  ModelGraph out;
  std::vector<LayerResult> layer_results;
  switch (method)
  {
    case Method::kNearest:
      out = quantize_graph_nearest(graph, a.bits);
      break;
    case Method::kOmse:
      out = quantize_graph_omse(graph, a.bits, a.omse_grid);
      break;
    case Method::kFlip:
      out = quantize_graph_flip(graph, a.bits,
                                {a.fraction, parse_flip_direction(a.direction), parse_flip_scope(a.scope)});
      break;
    case Method::kEfrap:
    {
      EfrapConfig cfg;
      cfg.lambda_a = a.lambda_a;
      cfg.lambda_p = a.lambda_p;
      cfg.lambda_f = a.lambda_f;
      cfg.iterations = a.iters;
      cfg.learning_rate = a.lr;
      cfg.batch_size = a.batch;
      cfg.early_stop = a.early_stop;
      cfg.parallel_layers = a.parallel_layers;
      cfg.threads = thread_cap();
      cfg.seed = a.seed;
      auto result = efrap_quantize(graph, calib->samples, a.bits, cfg);
      out = std::move(result.graph);
      layer_results = std::move(result.layers);
      break;
    }
  }
  out.record = QuantRecord{a.method, a.bits, a.seed};
  if (a.act_bits != 0)
    attach_activation_ranges(out, graph, calib->samples, a.act_bits, a.act_calib == "after");

  WeightPacking packing = WeightPacking::kNone;
  if (a.pack_int)
  {
    if (a.bits > 8)
      throw ContractError("--pack-int supports at most 8-bit weights");
    packing = a.bits <= 4 ? WeightPacking::kInt4 : WeightPacking::kInt8;
  }
  save_model(out, a.out, packing);

  json layers = json::array();
  const auto weighted = out.weighted_layers();
  for (std::size_t t = 0; t < weighted.size(); ++t)
  {
    const auto &layer = out.layers[weighted[t]];
    const auto &q = *layer.quant;
    const auto nearest = quantize_nearest(graph.layers[weighted[t]].weight, q.config).state.nearest;
    std::size_t changed = 0;
    for (std::size_t i = 0; i < nearest.size(); ++i)
      changed += nearest[i] != q.strategy[i];
    json entry{{"index", weighted[t]},
               {"type", to_string(layer.kind)},
               {"scale", q.config.scale},
               {"n", q.config.lower},
               {"p", q.config.upper},
               {"scheme", to_string(q.config.scheme)},
               {"weights", nearest.size()},
               {"changed_vs_nearest", changed}};
    if (!layer_results.empty())
    {
      const auto &r = layer_results[t];
      entry["iterations_run"] = r.iterations_run;
      entry["converged_fraction"] = r.converged_fraction();
      json trace = json::array();
      for (const auto &tp : r.trace)
        trace.push_back({{"iteration", tp.iteration},
                         {"total", tp.total},
                         {"flip", tp.flip},
                         {"activation", tp.activation},
                         {"penalty", tp.penalty}});
      entry["loss_trace"] = std::move(trace);
    }
    layers.push_back(std::move(entry));
  }
  json manifest{{"tool", "quantguard"},
                {"version", kToolVersion},
                {"command", "quantize"},
                {"args", to_json(a)},
                {"outputs", {{"model", a.out}, {"model_bytes", fs::file_size(a.out)}}},
                {"layers", std::move(layers)}};
  write_text(a.manifest, manifest.dump(2) + "\n");
  std::cout << "wrote " << a.out << " and " << a.manifest << "\n";
}

struct EvaluateArgs
{
  std::string model;
  std::string clean;
  std::string triggered;
  std::optional<int> target;
  std::optional<double> asr_before;
  double alpha = 0.5;
  std::string name;
  std::string out;
};

std::int32_t resolve_target(std::optional<int> flag, const Dataset &triggered)
{
  if (flag)
    return *flag;
  if (triggered.trigger_target)
    return *triggered.trigger_target;
  throw ContractError("--target is required when the triggered set records no trigger target");
}

void run_evaluate(const EvaluateArgs &a)
{
  const ModelGraph graph = load_model(a.model);
  const Dataset clean = load_dataset(a.clean);
  const Dataset triggered = load_dataset(a.triggered);
  const std::int32_t target = resolve_target(a.target, triggered);
  if (a.asr_before && !(*a.asr_before >= 0.0 && *a.asr_before <= 100.0))
    throw ContractError("--asr-before must be a percentage in [0, 100]");
  if (!(a.alpha >= 0.0 && a.alpha <= 1.0))
    throw ContractError("--alpha must lie in [0, 1]");
  const Evaluation e = evaluate_graph(graph, clean, triggered, target);
  const std::string method = graph.record ? graph.record->method : "full_precision";
  const int bits = graph.record ? graph.record->bits : 32;
  const std::uint64_t seed = graph.record ? graph.record->seed : 0;
  const std::string name = a.name.empty() ? fs::path(a.model).stem().string() : a.name;
  const EvalReport report = make_report(name, method, bits, e.cda, e.asr, a.asr_before, seed, a.alpha);

  const std::string csv = report_csv_header() + "\n" + report_csv_row(report) + "\n";
  if (!a.out.empty())
  {
    write_text(a.out, report_json(report) + "\n");
    write_text(fs::path(a.out).replace_extension(".csv"), csv);
  }
  std::cout << csv;
}

struct SweepArgs
{
  std::string model;
  std::string calib;
  std::string clean;
  std::string triggered;
  std::optional<int> target;
  int bits = 8;
  std::string fractions = "0:1:0.05";
  std::string direction = "both";
  std::string scope = "per-layer";
  std::string out;
};

void run_sweep(const SweepArgs &a)
{
  positive_clip(a.bits);
  const ModelGraph graph = load_model(a.model);
  if (!a.calib.empty())
    load_dataset(a.calib);
  const Dataset clean = load_dataset(a.clean);
  const Dataset triggered = load_dataset(a.triggered);
  const std::int32_t target = resolve_target(a.target, triggered);
  const auto fractions = parse_fraction_range(a.fractions);

  std::vector<FlipDirection> directions;
  if (a.direction == "both")
    directions = {FlipDirection::kLargestError, FlipDirection::kSmallestError};
  else
    directions = {parse_flip_direction(a.direction)};
  std::vector<FlipScope> scopes;
  if (a.scope == "both")
    scopes = {FlipScope::kPerLayer, FlipScope::kGlobal};
  else
    scopes = {parse_flip_scope(a.scope)};

  std::string csv = "fraction,direction,scope,cda,asr\n";
  char buf[160];
  for (auto scope : scopes)
  {
    for (auto direction : directions)
    {
      for (const auto &row : flip_sweep(graph, a.bits, fractions, direction, scope, clean, triggered, target))
      {
        std::snprintf(buf, sizeof(buf), "%.4f,%s,%s,%.4f,%.4f\n", row.fraction, to_string(row.direction).c_str(),
                      to_string(row.scope).c_str(), row.cda, row.asr);
        csv += buf;
      }
    }
  }
  if (a.out.empty())
    std::cout << csv;
  else
  {
    write_text(a.out, csv);
    std::cout << "wrote " << a.out << "\n";
  }
}

struct PlantArgs
{
  int bits = 8;
  std::size_t dim = 16;
  int classes = 2;
  std::uint64_t seed = 0;
  std::string out_dir;
};

void run_plant(const PlantArgs &a)
{
  const PlantedQcb f = build_planted_qcb(a.bits, a.dim, a.classes, a.seed);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  save_model(f.graph, dir / "model.efqm");
  save_dataset(f.clean, dir / "clean.efqd");
  save_dataset(f.triggered, dir / "triggered.efqd");
  save_dataset(f.untriggered, dir / "untriggered.efqd");
  save_dataset(f.calibration, dir / "calib.efqd");
  const auto &c = f.certificate;
  json cert{{"bits", f.bits},
            {"target", f.target},
            {"trigger_coordinates", f.trigger_coordinates},
            {"trigger_amplitude", f.trigger_amplitude},
            {"fp_cda", c.fp_cda},
            {"fp_asr", c.fp_asr},
            {"nearest_cda", c.nearest_cda},
            {"nearest_asr", c.nearest_asr},
            {"trigger_removed_asr", c.trigger_removed_asr},
            {"flipped_asr", c.flipped_asr},
            {"passes", c.passes()}};
  write_text(dir / "certificate.json", cert.dump(2) + "\n");
  std::cout << "wrote planted fixture to " << dir.string() << "\n";
}

void run_rerun(const std::string &manifest_path, const std::string &out_override)
{
  const auto bytes = read_file(manifest_path);
  json manifest;
  try
  {
    manifest = json::parse(bytes.begin(), bytes.end());
  }
  catch (const json::exception &e)
  {
    throw ContractError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (manifest.value("command", "") != "quantize" || !manifest.contains("args"))
    throw ContractError("manifest does not describe a quantize job");
  QuantizeArgs a = quantize_args_from_json(manifest.at("args"));
  if (!out_override.empty())
  {
    a.out = out_override;
    a.manifest = default_manifest(out_override);
  }
  run_quantize(a);
}

std::string escape(const std::string &s)
{
  std::string out;
  for (char c : s)
  {
    if (c == '"' || c == '\\')
      out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

int report_error(int code, const std::string &kind, const std::string &message)
{
  std::cerr << "error code=" << code << " kind=" << kind << " message=\"" << escape(message) << "\"\n";
  return code;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Post-training weight quantization with backdoor-removing rounding"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  QuantizeArgs q;
  auto *quantize = app.add_subcommand("quantize", "Quantize a model container");
  quantize->add_option("--model", q.model, "Input model (.efqm)")->required();
  quantize->add_option("--calib", q.calib, "Unlabelled calibration set (.efqd)");
  quantize->add_option("--bits", q.bits, "Weight bit-width")->check(CLI::Range(2, 16));
  quantize->add_option("--method", q.method, "Rounding method")
    ->check(CLI::IsMember({"nearest", "efrap", "flip", "omse"}));
  quantize->add_option("--fraction", q.fraction, "Flip fraction (method flip)")->check(CLI::Range(0.0, 1.0));
  quantize->add_option("--direction", q.direction, "Flip largest or smallest errors")
    ->check(CLI::IsMember({"max", "min"}));
  quantize->add_option("--scope", q.scope, "Flip ranking scope")->check(CLI::IsMember({"per-layer", "global"}));
  quantize->add_option("--lambda-a", q.lambda_a, "Activation-preservation weight");
  quantize->add_option("--lambda-p", q.lambda_p, "Penalty weight");
  quantize->add_option("--lambda-f", q.lambda_f, "Flip-loss weight (0 disables)");
  quantize->add_option("--iters", q.iters, "Iterations per layer");
  quantize->add_option("--lr", q.lr, "Learning rate");
  quantize->add_option("--batch", q.batch, "Calibration batch size");
  quantize->add_flag("--early-stop", q.early_stop, "Stop a layer once its loss plateaus");
  quantize->add_flag("--parallel-layers", q.parallel_layers, "Optimize layers concurrently");
  quantize->add_option("--omse-grid", q.omse_grid, "Scale candidates for method omse")->check(CLI::Range(2, 1 << 20));
  quantize->add_option("--act-bits", q.act_bits, "Activation bit-width (0 keeps activations in full precision)");
  quantize->add_option("--act-calib", q.act_calib, "Calibrate activation ranges after or before weight quantization")
    ->check(CLI::IsMember({"after", "before"}));
  quantize->add_option("--seed", q.seed, "Seed");
  quantize->add_flag("--pack-int", q.pack_int, "Store integer codes (i8, or i4 for bits <= 4)");
  quantize->add_option("--out", q.out, "Output model (.efqm)")->required();
  quantize->add_option("--manifest", q.manifest, "Run manifest path (default <out>.manifest.json)");

  EvaluateArgs e;
  int target_flag = -1;
  double asr_before_flag = -1.0;
  auto *evaluate = app.add_subcommand("evaluate", "Report CDA, ASR and DTM");
  evaluate->add_option("--model", e.model)->required();
  evaluate->add_option("--clean", e.clean, "Labelled clean set")->required();
  evaluate->add_option("--triggered", e.triggered, "Labelled triggered set")->required();
  auto *eval_target = evaluate->add_option("--target", target_flag, "Attack target class (-1: the triggered set's target)");
  auto *eval_before = evaluate->add_option("--asr-before", asr_before_flag, "ASR before the defense, in percent");
  evaluate->add_option("--alpha", e.alpha, "DTM weight");
  evaluate->add_option("--name", e.name, "Model name in the report (default: file stem)");
  evaluate->add_option("--out", e.out, "Report JSON; a .csv is written next to it");

  SweepArgs s;
  int sweep_target = -1;
  auto *sweep = app.add_subcommand("sweep", "Evaluate error-ranked flipping over a grid of fractions");
  sweep->add_option("--model", s.model, "Full-precision model (.efqm)")->required();
  sweep->add_option("--calib", s.calib, "Calibration set (checked only; flipping needs no data)");
  sweep->add_option("--clean", s.clean, "Labelled clean set")->required();
  sweep->add_option("--triggered", s.triggered, "Labelled triggered set")->required();
  auto *sweep_target_opt = sweep->add_option("--target", sweep_target, "Attack target class (-1: the triggered set's target)");
  sweep->add_option("--bits", s.bits, "Weight bit-width")->check(CLI::Range(2, 16));
  sweep->add_option("--fractions", s.fractions, "start:stop:step");
  sweep->add_option("--direction", s.direction, "Flip largest errors, smallest, or both")->check(CLI::IsMember({"max", "min", "both"}));
  sweep->add_option("--scope", s.scope, "Flip ranking scope")->check(CLI::IsMember({"per-layer", "global", "both"}));
  sweep->add_option("--out", s.out, "CSV path (stdout when omitted)");

  PlantArgs p;
  auto *plant = app.add_subcommand("plant", "Write a certified planted-backdoor fixture");
  plant->add_option("--bits", p.bits)->check(CLI::IsMember({4, 8}));
  plant->add_option("--dim", p.dim);
  plant->add_option("--classes", p.classes);
  plant->add_option("--seed", p.seed);
  plant->add_option("--out-dir", p.out_dir)->required();

  std::string manifest_path, rerun_out;
  auto *rerun = app.add_subcommand("rerun", "Repeat a quantize job from its manifest");
  rerun->add_option("--manifest", manifest_path)->required();
  rerun->add_option("--out", rerun_out, "Write to a different model path");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::CallForHelp &ex)
  {
    return app.exit(ex);
  }
  catch (const CLI::CallForAllHelp &ex)
  {
    return app.exit(ex);
  }
  catch (const CLI::CallForVersion &ex)
  {
    return app.exit(ex);
  }
  catch (const CLI::ParseError &ex)
  {
    return report_error(static_cast<int>(ExitCode::kBadInput), "usage", ex.what());
  }

  try
  {
    if (*quantize)
      run_quantize(q);
    else if (*evaluate)
    {
      if (*eval_target)
        e.target = target_flag;
      if (*eval_before)
        e.asr_before = asr_before_flag;
      run_evaluate(e);
    }
    else if (*sweep)
    {
      if (*sweep_target_opt)
        s.target = sweep_target;
      run_sweep(s);
    }
    else if (*plant)
      run_plant(p);
    else if (*rerun)
      run_rerun(manifest_path, rerun_out);
  }
  catch (const Error &ex)
  {
    return report_error(static_cast<int>(ex.code()), ex.kind(), ex.what());
  }
  catch (const std::filesystem::filesystem_error &ex)
  {
    return report_error(static_cast<int>(ExitCode::kFormatError), "io", ex.what());
  }
  catch (const std::exception &ex)
  {
    return report_error(static_cast<int>(ExitCode::kBadInput), "internal", ex.what());
  }
  return 0;
}
