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

#include "crowdpoint/decoder.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace crowdpoint {

void DecoderConfig::validate() const {
  if (width <= 0) throw std::invalid_argument("decoder.width must be positive");
}

namespace {
SpamConfig with_channels(SpamConfig c, int64_t ch) {
  c.channels = ch;
  return c;
}
AfamConfig with_channels(AfamConfig c, int64_t ch) {
  c.channels = ch;
  return c;
}
}  // namespace

template <typename T>
Msad<T>::Msad(const DecoderConfig& cfg, std::array<int64_t, 3> pyramid_channels, const SpamConfig& spam_cfg,
              const AfamConfig& afam_cfg, std::mt19937_64& rng)
    : lateral16(pyramid_channels[2], (cfg.validate(), cfg.width), 1, true, rng),
      lateral8(pyramid_channels[1], cfg.width, 1, true, rng),
      lateral4(pyramid_channels[0], cfg.width, 1, true, rng),
      cfg_(cfg),
      pyramid_channels_(pyramid_channels) {
  this->register_module("lateral16", lateral16);
  this->register_module("lateral8", lateral8);
  this->register_module("lateral4", lateral4);
  if (cfg.use_spam) {
    spam = std::make_unique<Spam<T>>(with_channels(spam_cfg, cfg.width), rng);
    this->register_module("spam", *spam);
  } else {
    conv16 = std::make_unique<ConvRelu<T>>(cfg.width, cfg.width, rng);
    this->register_module("conv16", *conv16);
  }
  if (cfg.use_afam) {
    afam8 = std::make_unique<Afam<T>>(with_channels(afam_cfg, cfg.width), rng);
    afam4 = std::make_unique<Afam<T>>(with_channels(afam_cfg, cfg.width), rng);
    this->register_module("afam8", *afam8);
    this->register_module("afam4", *afam4);
  } else {
    conv8 = std::make_unique<ConvRelu<T>>(cfg.width, cfg.width, rng);
    conv4 = std::make_unique<ConvRelu<T>>(cfg.width, cfg.width, rng);
    this->register_module("conv8", *conv8);
    this->register_module("conv4", *conv4);
  }
}

template <typename T>
Var<T> Msad<T>::forward(const FeaturePyramid<T>& p) {
  const auto check = [&](const Var<T>& f, int64_t channels, const char* name) {
    if (!f.defined() || f.value().rank() != 4 || f.dim(1) != channels) {
      throw std::invalid_argument(std::string("msad: pyramid level ") + name + " expected " +
                                  std::to_string(channels) + " channels, got " +
                                  (f.defined() ? shape_str(f.shape()) : std::string("none")));
    }
  };
  check(p.f4, pyramid_channels_[0], "f4");
  check(p.f8, pyramid_channels_[1], "f8");
  check(p.f16, pyramid_channels_[2], "f16");
  const int64_t h16 = p.f16.dim(2), w16 = p.f16.dim(3);
  if (p.f8.dim(2) != 2 * h16 || p.f8.dim(3) != 2 * w16 || p.f4.dim(2) != 4 * h16 || p.f4.dim(3) != 4 * w16 ||
      p.f8.dim(0) != p.f16.dim(0) || p.f4.dim(0) != p.f16.dim(0)) {
    throw std::invalid_argument("msad: pyramid spatial sizes are not at strides 4/8/16 of one input");
  }

  Var<T> h = lateral16.forward(p.f16);
  h = spam ? spam->forward(h) : conv16->forward(h);
  h = ops::add(ops::upsample_bilinear2x(h), lateral8.forward(p.f8));
  h = afam8 ? afam8->forward(h) : conv8->forward(h);
  h = ops::add(ops::upsample_bilinear2x(h), lateral4.forward(p.f4));
  h = afam4 ? afam4->forward(h) : conv4->forward(h);
  return ops::upsample_bilinear2x(h);
}

template <typename T>
std::vector<RepConv<T>*> Msad<T>::repconvs() {
  std::vector<RepConv<T>*> out;
  if (afam8) out.push_back(&afam8->repconv);
  if (afam4) out.push_back(&afam4->repconv);
  return out;
}

template <typename T>
PointHead<T>::PointHead(int64_t width, std::mt19937_64& rng)
    : offset(width, 2, 3, true, rng), logit(width, 1, 3, true, rng) {
  // Small offset weights start predictions at the anchors.
  for (int64_t i = 0; i < offset.weight.value().numel(); ++i) offset.weight.mutable_value()[i] *= T(0.1);
  logit.bias.mutable_value().fill(static_cast<T>(kLogitPriorBias));
  this->register_module("offset", offset);
  this->register_module("logit", logit);
}

template <typename T>
DenseOutput<T> PointHead<T>::forward(const Var<T>& decoded) const {
  return {offset.forward(decoded), logit.forward(decoded)};
}

std::vector<Point> make_anchors(int64_t height, int64_t width, int64_t stride) {
  if (stride <= 0 || height % stride != 0 || width % stride != 0) {
    throw std::invalid_argument("make_anchors: " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible by stride " + std::to_string(stride));
  }
  const double s = static_cast<double>(stride);
  std::vector<Point> anchors;
  anchors.reserve(static_cast<size_t>((height / stride) * (width / stride)));
  for (int64_t i = 0; i < height / stride; ++i)
    for (int64_t j = 0; j < width / stride; ++j) anchors.push_back({s * (j + 0.5), s * (i + 0.5)});
  return anchors;
}

template <typename T>
std::vector<ScoredPoint> decode_points(const DenseOutput<T>& dense, const std::vector<Point>& anchors, double tau,
                                       int64_t valid_height, int64_t valid_width, int64_t batch_index) {
  const Tensor<T>& off = dense.offsets.value();
  const Tensor<T>& logit = dense.logits.value();
  const int64_t gh = logit.dim(2), gw = logit.dim(3), cells = gh * gw;
  if (static_cast<int64_t>(anchors.size()) != cells || off.dim(2) != gh || off.dim(3) != gw) {
    throw std::invalid_argument("decode_points: anchors do not align with the dense grid");
  }
  double cut;
  if (tau <= 0.0) {
    cut = -std::numeric_limits<double>::infinity();
  } else if (tau >= 1.0) {
    cut = std::numeric_limits<double>::infinity();
  } else {
    cut = std::log(tau / (1.0 - tau));
  }
  const T* dx = off.data() + batch_index * 2 * cells;
  const T* dy = dx + cells;
  const T* z = logit.data() + batch_index * cells;
  std::vector<ScoredPoint> out;
  for (int64_t k = 0; k < cells; ++k) {
    const double zk = static_cast<double>(z[k]);
    if (!(zk >= cut)) continue;
    const double x = anchors[static_cast<size_t>(k)].x + static_cast<double>(dx[k]);
    const double y = anchors[static_cast<size_t>(k)].y + static_cast<double>(dy[k]);
    if (!(x >= 0.0 && x < static_cast<double>(valid_width) && y >= 0.0 && y < static_cast<double>(valid_height))) {
      continue;
    }
    out.push_back({x, y, 1.0 / (1.0 + std::exp(-zk))});
  }
  return out;
}

template class Msad<float>;
template class Msad<double>;
template class PointHead<float>;
template class PointHead<double>;
template std::vector<ScoredPoint> decode_points(const DenseOutput<float>&, const std::vector<Point>&, double, int64_t,
                                                int64_t, int64_t);
template std::vector<ScoredPoint> decode_points(const DenseOutput<double>&, const std::vector<Point>&, double,
                                                int64_t, int64_t, int64_t);

}  // namespace crowdpoint
