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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crowdpoint/data.hpp"
#include "crowdpoint/matching.hpp"
#include "crowdpoint/model.hpp"

namespace crowdpoint {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double adam_eps = 1e-8;
  int64_t batch_size = 1;
  int64_t epochs = 10;
  int64_t steps_per_epoch = 100;
  uint64_t seed = 0;
  std::string resume;  // checkpoint to continue from; empty for a fresh run
  std::string out_dir = "runs/default";
};

struct DataConfig {
  // Directory of images with <stem>.json sidecars, or "synthetic".
  std::string train = "synthetic";
  // Same conventions; empty evaluates on the training scenes.
  std::string val;
  int64_t crop_size = 128;
  double flip_probability = 0.5;
};

struct SynthConfig {
  int64_t count = 5;
  int64_t min_points = 3;
  int64_t max_points = 20;
  int64_t size = 128;
  uint64_t seed = 7;
};

struct RunConfig {
  ModelConfig model;
  LossWeights loss;
  double tau = 0.5;
  double delta = 4.0;
  TrainConfig train;
  DataConfig data;
  SynthConfig synth;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Parses "key = value" lines; '#' starts a comment. Unknown keys and bad
// values throw std::invalid_argument naming the field and line.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Every key with its current value, one per line, in a fixed order.
std::string format_config(const RunConfig& cfg);

struct ConfigField {
  std::string key;
  std::string default_value;
  std::string description;
};
std::vector<ConfigField> config_reference();
// Markdown table of config_reference().
std::string config_reference_markdown();

}  // namespace crowdpoint
