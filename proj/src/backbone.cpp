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

#include "crowdpoint/backbone.hpp"

#include <algorithm>
#include <stdexcept>

namespace crowdpoint {

std::string to_string(BackboneVariant v) { return v == BackboneVariant::kFull ? "full" : "tiny"; }

BackboneVariant parse_backbone_variant(const std::string& s) {
  if (s == "full") return BackboneVariant::kFull;
  if (s == "tiny") return BackboneVariant::kTiny;
  throw std::invalid_argument("unknown backbone variant '" + s + "' (expected full or tiny)");
}

BackboneLayout backbone_layout(BackboneVariant v) {
  if (v == BackboneVariant::kFull) {
    return {{std::vector<int64_t>{64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}}};
  }
  // Same stage/pool structure at quarter width; the last stage keeps a single
  // convolution to stay under 200k parameters.
  return {{std::vector<int64_t>{16, 16}, {32, 32}, {64, 64}, {128}}};
}

PaddedImage pad_to_multiple(const Tensor<float>& image, int64_t multiple) {
  if (multiple <= 0) throw std::invalid_argument("pad_to_multiple: multiple must be positive");
  if (image.rank() != 3) throw std::invalid_argument("pad_to_multiple: expected C x H x W, got " + shape_str(image.shape()));
  const int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const int64_t ph = (h + multiple - 1) / multiple * multiple;
  const int64_t pw = (w + multiple - 1) / multiple * multiple;
  PaddedImage out{Tensor<float>({c, std::max(ph, multiple), std::max(pw, multiple)}), h, w};
  const int64_t oh = out.image.dim(1), ow = out.image.dim(2);
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < h; ++i) {
      const float* src = image.data() + (ch * h + i) * w;
      std::copy(src, src + w, out.image.data() + (ch * oh + i) * ow);
    }
  return out;
}

template <typename T>
Encoder<T>::Encoder(const BackboneConfig& cfg, std::mt19937_64& rng) : layout_(backbone_layout(cfg.variant)) {
  int64_t in = 3;
  for (size_t s = 0; s < 4; ++s) {
    for (size_t i = 0; i < layout_.stages[s].size(); ++i) {
      const int64_t out = layout_.stages[s][i];
      Block b{std::make_unique<Conv2d<T>>(in, out, 3, true, rng), std::make_unique<BatchNorm2d<T>>(out)};
      const std::string stem = "stage" + std::to_string(s + 1);
      this->register_module(stem + ".conv" + std::to_string(i), *b.conv);
      this->register_module(stem + ".bn" + std::to_string(i), *b.bn);
      blocks_.push_back(std::move(b));
      in = out;
    }
    stage_end_[s] = blocks_.size();
  }
}

template <typename T>
FeaturePyramid<T> Encoder<T>::forward(const Var<T>& x) {
  if (x.value().rank() != 4 || x.dim(1) != 3) {
    throw std::invalid_argument("encode: expected N x 3 x H x W input, got " + shape_str(x.shape()));
  }
  if (x.dim(2) % 32 != 0 || x.dim(3) % 32 != 0) {
    throw std::invalid_argument("encode: spatial size " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                                " is not divisible by 32; pad the input first");
  }
  FeaturePyramid<T> out;
  Var<T> h = x;
  size_t block = 0;
  for (size_t s = 0; s < 4; ++s) {
    for (; block < stage_end_[s]; ++block) {
      h = ops::relu(blocks_[block].bn->forward(blocks_[block].conv->forward(h)));
    }
    h = ops::max_pool2x2(h);
    if (s == 1) out.f4 = h;
    if (s == 2) out.f8 = h;
    if (s == 3) out.f16 = h;
  }
  return out;
}

template class Encoder<float>;
template class Encoder<double>;

}  // namespace crowdpoint
