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
#include <vector>

#include "crowdpoint/checkpoint.hpp"
#include "crowdpoint/nn.hpp"

namespace crowdpoint {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

// Adam with bias correction over a fixed list of named parameters.
class Adam {
 public:
  Adam(std::vector<NamedParameter<float>> params, AdamOptions opts);

  // Parameters without a gradient are skipped for this step.
  void step();
  void zero_grad();

  int64_t steps() const { return t_; }
  const AdamOptions& options() const { return opts_; }

  // Moments as "m.<param>" and "v.<param>" entries.
  std::vector<TensorEntry> state() const;
  // Throws std::runtime_error listing missing or mis-shaped moments.
  void load_state(const std::vector<TensorEntry>& entries, int64_t steps);

 private:
  std::vector<NamedParameter<float>> params_;
  std::vector<Tensor<float>> m_, v_;
  AdamOptions opts_;
  int64_t t_ = 0;
};

}  // namespace crowdpoint
