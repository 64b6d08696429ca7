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
#include <random>
#include <vector>

#include "crowdpoint/backbone.hpp"
#include "crowdpoint/blocks.hpp"
#include "crowdpoint/decoder.hpp"

namespace crowdpoint {

struct ModelConfig {
  BackboneConfig backbone;
  DecoderConfig decoder;
  SpamConfig spam;
  AfamConfig afam;

  void validate() const;
};

// Encoder -> MSAD -> point head. Parameter names are prefixed "backbone.",
// "decoder." and "head.".
template <typename T>
class Network : public Module<T> {
 public:
  Network(const ModelConfig& cfg, uint64_t seed);

  // x: N x 3 x H x W, H and W divisible by 32.
  DenseOutput<T> forward(const Var<T>& x);

  // Folds every RepConv in the decoder. Throws std::logic_error when already fused.
  void fuse();
  // Replaces RepConv branches by empty fused kernels ahead of loading a fused state.
  void prepare_fused();
  bool fused() const { return fused_; }

  const ModelConfig& config() const { return cfg_; }

  Encoder<T> backbone;
  Msad<T> decoder;
  PointHead<T> head;

 private:
  struct Rng {
    explicit Rng(uint64_t seed) : engine(seed) {}
    std::mt19937_64 engine;
  };
  Network(const ModelConfig& cfg, Rng rng);

  ModelConfig cfg_;
  bool fused_ = false;
};

// Input side must be a multiple of this for the encoder.
constexpr int64_t kInputMultiple = 32;
// Stride of the anchor lattice and of the dense output.
constexpr int64_t kAnchorStride = 2;

// Runs the network on one C x H x W image in eval mode without gradients and
// returns the decoded points inside the original extent.
std::vector<ScoredPoint> predict_points(Network<float>& net, const Tensor<float>& image, double tau);

// Loads "backbone.*" entries of a checkpoint-format file into the encoder.
// Returns false and logs a warning when the file is absent.
template <typename T>
bool load_pretrained_backbone(Network<T>& net, const std::filesystem::path& path);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace crowdpoint
