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

#include "crowdpoint/model.hpp"

#include <spdlog/spdlog.h>

#include <stdexcept>

#include "crowdpoint/checkpoint.hpp"

namespace crowdpoint {

void ModelConfig::validate() const {
  decoder.validate();
  SpamConfig s = spam;
  s.channels = decoder.width;
  AfamConfig a = afam;
  a.channels = decoder.width;
  if (decoder.use_spam) s.validate();
  if (decoder.use_afam) a.validate();
}

template <typename T>
Network<T>::Network(const ModelConfig& cfg, uint64_t seed) : Network((cfg.validate(), cfg), Rng(seed)) {}

template <typename T>
Network<T>::Network(const ModelConfig& cfg, Rng rng)
    : backbone(cfg.backbone, rng.engine),
      decoder(cfg.decoder, backbone.tap_channels(), cfg.spam, cfg.afam, rng.engine),
      head(cfg.decoder.width, rng.engine),
      cfg_(cfg) {
  this->register_module("backbone", backbone);
  this->register_module("decoder", decoder);
  this->register_module("head", head);
  if (cfg.backbone.pretrained) load_pretrained_backbone(*this, cfg.backbone.pretrained_path);
}

template <typename T>
DenseOutput<T> Network<T>::forward(const Var<T>& x) {
  return head.forward(decoder.forward(backbone.forward(x)));
}

template <typename T>
void Network<T>::fuse() {
  if (fused_) throw std::logic_error("model is already fused");
  for (RepConv<T>* r : decoder.repconvs()) r->fuse();
  fused_ = true;
}

template <typename T>
void Network<T>::prepare_fused() {
  if (fused_) return;
  for (RepConv<T>* r : decoder.repconvs()) r->prepare_fused();
  fused_ = true;
}

std::vector<ScoredPoint> predict_points(Network<float>& net, const Tensor<float>& image, double tau) {
  const PaddedImage padded = pad_to_multiple(image, kInputMultiple);
  const bool was_training = net.training();
  net.set_training(false);
  DenseOutput<float> dense;
  {
    NoGradGuard guard;
    Shape shape = padded.image.shape();
    shape.insert(shape.begin(), 1);
    dense = net.forward(Var<float>(padded.image.reshaped(shape)));
  }
  net.set_training(was_training);
  const auto anchors = make_anchors(padded.image.dim(1), padded.image.dim(2), kAnchorStride);
  return decode_points(dense, anchors, tau, padded.height, padded.width);
}

template <typename T>
bool load_pretrained_backbone(Network<T>& net, const std::filesystem::path& path) {
  if (path.empty() || !std::filesystem::exists(path)) {
    spdlog::warn("pretrained backbone weights not found at '{}'; using random initialization", path.string());
    return false;
  }
  const Checkpoint ckpt = load_checkpoint(path);
  load_module_state(net.backbone, ckpt.entries, "backbone");
  spdlog::info("loaded pretrained backbone from {}", path.string());
  return true;
}

template class Network<float>;
template class Network<double>;
template bool load_pretrained_backbone(Network<float>&, const std::filesystem::path&);
template bool load_pretrained_backbone(Network<double>&, const std::filesystem::path&);

}  // namespace crowdpoint
