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

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "crowdpoint/data.hpp"
#include "crowdpoint/metrics.hpp"
#include "crowdpoint/profile.hpp"

namespace crowdpoint {

// Implementations behind the CLI subcommands. All throw on failure and write
// human-readable progress to `out`.

void run_train(const std::filesystem::path& config, std::ostream& out);

// JSON array of {"x", "y", "score"} objects.
std::string predictions_json(const std::vector<ScoredPoint>& points);

// Returns the predicted points; writes them to `json_out` when given.
std::vector<ScoredPoint> run_infer(const std::filesystem::path& ckpt, const std::filesystem::path& image,
                                   std::optional<double> tau, const std::optional<std::filesystem::path>& json_out,
                                   std::ostream& out);

// Writes metrics.json and metrics.txt into `out_dir` when given.
MetricsReport run_eval(const std::filesystem::path& ckpt, const std::filesystem::path& data, std::optional<double> tau,
                       std::optional<double> delta, const std::optional<std::filesystem::path>& out_dir,
                       std::ostream& out);

// Throws std::runtime_error when the input is already fused.
void run_fuse(const std::filesystem::path& in, const std::filesystem::path& out_path, std::ostream& out);

ProfileReport run_profile(const std::filesystem::path& config, int64_t height, int64_t width, int runs, int warmup,
                          bool fused, std::ostream& out);

// Returns the number of drawn markers.
size_t run_render(const std::filesystem::path& ckpt, const std::filesystem::path& image,
                  const std::filesystem::path& out_path, std::optional<double> tau, std::ostream& out);

// Parses "H,W" (or a single "S" for a square input).
std::pair<int64_t, int64_t> parse_hw(const std::string& text);

}  // namespace crowdpoint
