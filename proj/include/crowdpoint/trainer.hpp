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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "crowdpoint/checkpoint.hpp"
#include "crowdpoint/config.hpp"
#include "crowdpoint/metrics.hpp"
#include "crowdpoint/model.hpp"
#include "crowdpoint/optim.hpp"

namespace crowdpoint {

struct StepRecord {
  int64_t step = 0;
  double loss = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  int64_t matches = 0;
};

struct EpochRecord {
  int64_t epoch = 0;
  double val_mae = 0.0;
  double val_f1 = 0.0;
};

std::string format_step(const StepRecord& r);
std::string format_epoch(const EpochRecord& r);

struct TrainOptions {
  // Write epoch_NNNN.ckpt, last.ckpt and train.log under train.out_dir.
  bool write_outputs = true;
  // Receives every log line.
  std::function<void(const std::string&)> on_line;
  // Skips the per-epoch validation pass; epoch records then hold NaN.
  bool skip_validation = false;
};

struct TrainSummary {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::filesystem::path last_checkpoint;
};

// Scenes of a data path, or the configured synthetic set for "synthetic".
std::vector<Scene> load_split(const std::string& path, const RunConfig& cfg);

// Eval-mode predictions for every scene, then counting and localization metrics.
MetricsReport evaluate_scenes(Network<float>& net, const std::vector<Scene>& scenes, double tau, double delta);

Checkpoint snapshot_checkpoint(Network<float>& net, const RunConfig& cfg, const Adam* optimizer, int64_t epoch,
                               int64_t step);

struct LoadedModel {
  RunConfig config;
  std::unique_ptr<Network<float>> net;
  Checkpoint checkpoint;
};

// Rebuilds the network from the embedded config and loads its state.
LoadedModel load_model(const std::filesystem::path& path);

// Adam on compute_loss over random crops; deterministic for a fixed config.
TrainSummary train_model(const RunConfig& cfg, const TrainOptions& opts = {});

}  // namespace crowdpoint
