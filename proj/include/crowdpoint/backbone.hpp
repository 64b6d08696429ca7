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

#include <array>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "crowdpoint/nn.hpp"

namespace crowdpoint {

enum class BackboneVariant { kFull, kTiny };

std::string to_string(BackboneVariant v);
BackboneVariant parse_backbone_variant(const std::string& s);

struct BackboneConfig {
  BackboneVariant variant = BackboneVariant::kFull;
  bool pretrained = false;
  // Checkpoint-format file whose "backbone.*" entries initialize the encoder.
  std::filesystem::path pretrained_path;
};

// Stage layout of the VGG16-bn front end: convolutions per stage and their
// widths. Taps follow the pooling of stages 2, 3 and 4 (strides 4, 8, 16).
struct BackboneLayout {
  std::array<std::vector<int64_t>, 4> stages;
  std::array<int64_t, 3> tap_channels() const {
    return {stages[1].back(), stages[2].back(), stages[3].back()};
  }
};

BackboneLayout backbone_layout(BackboneVariant v);

template <typename T>
struct FeaturePyramid {
  Var<T> f4;
  Var<T> f8;
  Var<T> f16;
};

struct PaddedImage {
  Tensor<float> image;
  int64_t height = 0;  // original extent
  int64_t width = 0;
};

// Zero-pads a C x H x W image right/bottom to the next multiple.
PaddedImage pad_to_multiple(const Tensor<float>& image, int64_t multiple);

// (conv3x3 -> BN -> ReLU) blocks separated by 2x2 max pooling.
template <typename T>
class Encoder : public Module<T> {
 public:
  Encoder(const BackboneConfig& cfg, std::mt19937_64& rng);

  // x: N x 3 x H x W with H, W divisible by 32.
  FeaturePyramid<T> forward(const Var<T>& x);

  const BackboneLayout& layout() const { return layout_; }
  std::array<int64_t, 3> tap_channels() const { return layout_.tap_channels(); }

 private:
  struct Block {
    std::unique_ptr<Conv2d<T>> conv;
    std::unique_ptr<BatchNorm2d<T>> bn;
  };
  BackboneLayout layout_;
  std::vector<Block> blocks_;
  std::array<size_t, 4> stage_end_{};
};

extern template class Encoder<float>;
extern template class Encoder<double>;

}  // namespace crowdpoint
