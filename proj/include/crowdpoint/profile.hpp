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
#include <string>

#include "crowdpoint/model.hpp"

namespace crowdpoint {

struct ProfileReport {
  int64_t height = 0;
  int64_t width = 0;
  int64_t encoder_params = 0;
  int64_t decoder_params = 0;  // decoder and head
  int64_t total_params = 0;
  int64_t macs = 0;  // multiply-adds of one forward pass on a 1 x 3 x H x W input
  int runs = 0;
  int warmup = 0;
  double mean_ms = 0.0;
  bool fused = false;
};

// Reference figures of the full-size model, echoed for comparison only.
constexpr int64_t kReferenceParams = 2515008;
constexpr double kReferenceGflops = 133.871;

// Counts parameters, measures multiply-adds with one eval-mode pass and times
// `runs` passes after `warmup` untimed ones. `runs` = 0 skips timing.
ProfileReport profile_network(Network<float>& net, int64_t height, int64_t width, int runs = 50, int warmup = 10);

std::string format_profile(const ProfileReport& r);

}  // namespace crowdpoint
