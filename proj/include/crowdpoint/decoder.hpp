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
#include <memory>
#include <random>
#include <vector>

#include "crowdpoint/backbone.hpp"
#include "crowdpoint/blocks.hpp"
#include "crowdpoint/data.hpp"

namespace crowdpoint {

struct DecoderConfig {
  int64_t width = 32;
  bool use_spam = true;
  bool use_afam = true;

  void validate() const;
};

// Per-anchor predictions on the stride-2 grid: offsets N x 2 x H/2 x W/2
// (dx, dy in input pixels) and confidence logits N x 1 x H/2 x W/2.
template <typename T>
struct DenseOutput {
  Var<T> offsets;
  Var<T> logits;
};

// Multi-scale attentive decoder. Lateral 1x1 projections bring every pyramid
// level to `width` channels; stride 16 -> SPAM -> x2 + f8 -> AFAM -> x2 + f4
// -> AFAM -> x2. Disabled blocks are replaced by conv3x3 + ReLU.
template <typename T>
class Msad : public Module<T> {
 public:
  Msad(const DecoderConfig& cfg, std::array<int64_t, 3> pyramid_channels, const SpamConfig& spam,
       const AfamConfig& afam, std::mt19937_64& rng);

  // Returns N x width x H/2 x W/2.
  Var<T> forward(const FeaturePyramid<T>& pyramid);

  const DecoderConfig& config() const { return cfg_; }
  std::vector<RepConv<T>*> repconvs();

  Conv2d<T> lateral16;
  Conv2d<T> lateral8;
  Conv2d<T> lateral4;
  std::unique_ptr<Spam<T>> spam;
  std::unique_ptr<Afam<T>> afam8;
  std::unique_ptr<Afam<T>> afam4;
  std::unique_ptr<ConvRelu<T>> conv16;
  std::unique_ptr<ConvRelu<T>> conv8;
  std::unique_ptr<ConvRelu<T>> conv4;

 private:
  DecoderConfig cfg_;
  std::array<int64_t, 3> pyramid_channels_;
};

// Sibling 3x3 heads for offsets (2 channels) and confidence logits (1 channel).
template <typename T>
class PointHead : public Module<T> {
 public:
  PointHead(int64_t width, std::mt19937_64& rng);
  DenseOutput<T> forward(const Var<T>& decoded) const;

  Conv2d<T> offset;
  Conv2d<T> logit;
};

// Logit bias at initialization, sigmoid(-4.6) ~ 0.01.
constexpr double kLogitPriorBias = -4.595;

// Cell centers (s*(j + 0.5), s*(i + 0.5)), row-major over the H/s x W/s grid.
std::vector<Point> make_anchors(int64_t height, int64_t width, int64_t stride = 2);

// Keeps anchor + offset for cells with sigmoid(logit) >= tau that land inside
// [0, valid_width) x [0, valid_height). The threshold is evaluated in logit
// space so tau = 1 keeps nothing. `batch_index` selects the image.
template <typename T>
std::vector<ScoredPoint> decode_points(const DenseOutput<T>& dense, const std::vector<Point>& anchors, double tau,
                                       int64_t valid_height, int64_t valid_width, int64_t batch_index = 0);

extern template class Msad<float>;
extern template class Msad<double>;
extern template class PointHead<float>;
extern template class PointHead<double>;

}  // namespace crowdpoint
