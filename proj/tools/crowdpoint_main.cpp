// Copyright 2026 The crowdpoint Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>
#include <optional>

#include "crowdpoint/commands.hpp"
#include "crowdpoint/config.hpp"

namespace {

template <typename V>
std::optional<V> maybe(const CLI::Option* opt, const V& value) {
  return opt->count() ? std::optional<V>(value) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace crowdpoint;
  CLI::App app{"crowdpoint: point-regression crowd counting and localization"};
  app.require_subcommand(1);

  std::string config, ckpt, image, data, in, out, hw = "128,128";
  double tau = 0.5, delta = 4.0;
  int runs = 50, warmup = 10;
  bool fused = false;

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", config, "Config file")->required();

  auto* infer = app.add_subcommand("infer", "Predict points on one image");
  infer->add_option("--ckpt", ckpt, "Checkpoint")->required();
  infer->add_option("--image", image, "Input image")->required();
  auto* infer_tau = infer->add_option("--tau", tau, "Confidence threshold (default: from checkpoint)");
  auto* infer_out = infer->add_option("--out", out, "Prediction JSON path");

  auto* eval = app.add_subcommand("eval", "Evaluate on an annotated directory (or 'synthetic')");
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--data", data, "Dataset directory")->required();
  auto* eval_tau = eval->add_option("--tau", tau, "Confidence threshold (default: from checkpoint)");
  auto* eval_delta = eval->add_option("--delta", delta, "Localization threshold in pixels (default: from checkpoint)");
  auto* eval_out = eval->add_option("--out", out, "Directory for metrics.json and metrics.txt");

  auto* fuse = app.add_subcommand("fuse", "Fold RepConv branches into single convolutions");
  fuse->add_option("--in", in, "Unfused checkpoint")->required();
  fuse->add_option("--out", out, "Output checkpoint")->required();

  auto* profile = app.add_subcommand("profile", "Parameter count, multiply-adds and forward time");
  profile->add_option("--config", config, "Config file")->required();
  profile->add_option("--hw", hw, "Input size H,W")->capture_default_str();
  profile->add_option("--runs", runs, "Timed runs")->capture_default_str();
  profile->add_option("--warmup", warmup, "Untimed warmup runs")->capture_default_str();
  profile->add_flag("--fused", fused, "Fuse RepConvs before profiling");

  auto* render = app.add_subcommand("render", "Draw predicted points and the count onto an image");
  render->add_option("--ckpt", ckpt, "Checkpoint")->required();
  render->add_option("--image", image, "Input image")->required();
  render->add_option("--out", out, "Output image")->required();
  auto* render_tau = render->add_option("--tau", tau, "Confidence threshold (default: from checkpoint)");

  auto* defaults = app.add_subcommand("config-defaults", "Print the configuration reference");
  bool as_config = false;
  defaults->add_flag("--as-config", as_config, "Emit a config file with every default instead of markdown");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      run_train(config, std::cout);
    } else if (*infer) {
      run_infer(ckpt, image, maybe(infer_tau, tau), maybe<std::filesystem::path>(infer_out, out), std::cout);
    } else if (*eval) {
      run_eval(ckpt, data, maybe(eval_tau, tau), maybe(eval_delta, delta),
               maybe<std::filesystem::path>(eval_out, out), std::cout);
    } else if (*fuse) {
      run_fuse(in, out, std::cout);
    } else if (*profile) {
      const auto [h, w] = parse_hw(hw);
      run_profile(config, h, w, runs, warmup, fused, std::cout);
    } else if (*render) {
      run_render(ckpt, image, out, maybe(render_tau, tau), std::cout);
    } else if (*defaults) {
      std::cout << (as_config ? format_config(RunConfig{}) : config_reference_markdown());
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
