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

#include "crowdpoint/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace crowdpoint {

std::string to_string(SpamFuse f) { return f == SpamFuse::kSum ? "sum" : "concat_project"; }

SpamFuse parse_spam_fuse(const std::string& s) {
  if (s == "sum") return SpamFuse::kSum;
  if (s == "concat_project") return SpamFuse::kConcatProject;
  throw std::invalid_argument("unknown SPAM fusion '" + s + "' (expected sum or concat_project)");
}

void SpamConfig::validate() const {
  if (channels <= 0) throw std::invalid_argument("spam: channels must be positive");
  if (heads <= 0 || channels % heads != 0) {
    throw std::invalid_argument("spam: channels (" + std::to_string(channels) + ") not divisible by heads (" +
                                std::to_string(heads) + ")");
  }
  if (codebook_size < 1) throw std::invalid_argument("spam: codebook_size must be >= 1");
  if (ff_expansion < 1) throw std::invalid_argument("spam: ff_expansion must be >= 1");
}

void AfamConfig::validate() const {
  if (channels <= 0) throw std::invalid_argument("afam: channels must be positive");
  if (reduction <= 0 || channels % reduction != 0) {
    throw std::invalid_argument("afam: channels (" + std::to_string(channels) + ") not divisible by reduction (" +
                                std::to_string(reduction) + ")");
  }
  if (kernel_a <= 0 || kernel_a % 2 == 0 || kernel_b <= 0 || kernel_b % 2 == 0) {
    throw std::invalid_argument("afam: kernels must be positive and odd");
  }
  if (split_channels && channels % 2 != 0) throw std::invalid_argument("afam: split_channels needs even channels");
}

namespace {
template <typename T>
void check_channels(const Var<T>& x, int64_t channels, const char* block) {
  if (x.value().rank() != 4 || x.dim(1) != channels) {
    throw std::invalid_argument(std::string(block) + ": expected " + std::to_string(channels) +
                                " channels, got input " + shape_str(x.shape()));
  }
}
}  // namespace

template <typename T>
TransformerBranch<T>::TransformerBranch(int64_t channels, int heads, int64_t ff_expansion, std::mt19937_64& rng)
    : ln1(channels),
      query(channels, channels, rng),
      key(channels, channels, rng),
      value(channels, channels, rng),
      out(channels, channels, rng),
      ln2(channels),
      ff1(channels, channels * ff_expansion, rng),
      ff2(channels * ff_expansion, channels, rng),
      channels_(channels),
      heads_(heads) {
  this->register_module("ln1", ln1);
  this->register_module("attn.query", query);
  this->register_module("attn.key", key);
  this->register_module("attn.value", value);
  this->register_module("attn.out", out);
  this->register_module("ln2", ln2);
  this->register_module("ff1", ff1);
  this->register_module("ff2", ff2);
}

template <typename T>
Var<T> TransformerBranch<T>::forward(const Var<T>& x, Tensor<T>* attention) const {
  check_channels(x, channels_, "transformer");
  const int64_t h = x.dim(2), w = x.dim(3);
  const Var<T> tokens = ops::to_tokens(x);
  const Var<T> normed = ln1.forward(tokens);
  const Var<T> mixed = ops::multi_head_attention(query.forward(normed), key.forward(normed), value.forward(normed),
                                                 heads_, attention);
  const Var<T> t = ops::add(tokens, out.forward(mixed));
  const Var<T> f = ff2.forward(ops::gelu(ff1.forward(ln2.forward(t))));
  return ops::from_tokens(ops::add(t, f), h, w);
}

template <typename T>
CodebookBranch<T>::CodebookBranch(int64_t channels, int64_t codebook_size, std::mt19937_64& rng) {
  Tensor<T> init({codebook_size, channels});
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int64_t i = 0; i < init.numel(); ++i) init[i] = static_cast<T>(dist(rng));
  codes = Var<T>(std::move(init), true);
  this->register_parameter("codes", codes);
}

template <typename T>
Var<T> CodebookBranch<T>::forward(const Var<T>& x, Tensor<T>* assignments) const {
  if (x.value().rank() != 4 || x.dim(1) != codes.dim(1)) {
    throw std::invalid_argument("codebook: code dimension " + std::to_string(codes.dim(1)) +
                                " does not match input " + shape_str(x.shape()));
  }
  const Var<T> recon = ops::codebook_attention(ops::to_tokens(x), codes, assignments);
  return ops::add(x, ops::from_tokens(recon, x.dim(2), x.dim(3)));
}

template <typename T>
Spam<T>::Spam(const SpamConfig& cfg, std::mt19937_64& rng)
    : transformer((cfg.validate(), cfg.channels), cfg.heads, cfg.ff_expansion, rng),
      conv(cfg.channels, cfg.channels, rng),
      codebook(cfg.channels, cfg.codebook_size, rng),
      transformer_proj(cfg.channels, cfg.channels, 1, true, rng),
      conv_proj(cfg.channels, cfg.channels, 1, true, rng),
      codebook_proj(cfg.channels, cfg.channels, 1, true, rng),
      fuse_proj(cfg.fuse == SpamFuse::kSum ? cfg.channels : 3 * cfg.channels, cfg.channels, 1, true, rng),
      cfg_(cfg) {
  this->register_module("transformer", transformer);
  this->register_module("conv", conv);
  this->register_module("codebook", codebook);
  this->register_module("transformer_proj", transformer_proj);
  this->register_module("conv_proj", conv_proj);
  this->register_module("codebook_proj", codebook_proj);
  this->register_module("fuse_proj", fuse_proj);
}

template <typename T>
Var<T> Spam<T>::forward(const Var<T>& x, SpamTrace<T>* trace) const {
  check_channels(x, cfg_.channels, "spam");
  const Var<T> bt = transformer_proj.forward(transformer.forward(x, trace ? &trace->attention : nullptr));
  const Var<T> bc = conv_proj.forward(conv.forward(x));
  const Var<T> bb = codebook_proj.forward(codebook.forward(x, trace ? &trace->assignments : nullptr));
  if (cfg_.fuse == SpamFuse::kSum) return fuse_proj.forward(ops::add(ops::add(bt, bc), bb));
  const Var<T> parts[] = {bt, bc, bb};
  return fuse_proj.forward(ops::concat_channels<T>(parts));
}

template <typename T>
RepConv<T>::RepConv(int64_t in_channels, int64_t out_channels, std::mt19937_64& rng, T bn_eps)
    : conv3(std::make_unique<Conv2d<T>>(in_channels, out_channels, 3, false, rng)),
      bn3(std::make_unique<BatchNorm2d<T>>(out_channels, bn_eps)),
      conv1(std::make_unique<Conv2d<T>>(in_channels, out_channels, 1, false, rng)),
      bn1(std::make_unique<BatchNorm2d<T>>(out_channels, bn_eps)),
      in_(in_channels),
      out_(out_channels) {
  register_all();
}

template <typename T>
void RepConv<T>::register_all() {
  const bool training = this->training();
  this->clear_registrations();
  if (conv3) {
    this->register_module("conv3", *conv3);
    this->register_module("bn3", *bn3);
    this->register_module("conv1", *conv1);
    this->register_module("bn1", *bn1);
  }
  if (fused_conv_) this->register_module("fused", *fused_conv_);
  this->set_training(training);
}

template <typename T>
Var<T> RepConv<T>::forward(const Var<T>& x, RepConvMode mode) const {
  if (mode == RepConvMode::kFused) {
    if (!fused_conv_) throw std::logic_error("repconv: fused mode requested but no fused parameters present");
    return ops::relu(fused_conv_->forward(x));
  }
  if (!conv3) throw std::logic_error("repconv: train mode requested but the branches were dropped by fusion");
  return ops::relu(ops::add(bn3->forward(conv3->forward(x)), bn1->forward(conv1->forward(x))));
}

template <typename T>
FusedConv<T> repconv_fold(const Conv2d<T>& conv3, const BatchNorm2d<T>& bn3, const Conv2d<T>& conv1,
                          const BatchNorm2d<T>& bn1) {
  const int64_t out = conv3.out_channels(), in = conv3.in_channels();
  if (conv3.kernel() != 3 || conv1.kernel() != 1 || conv1.out_channels() != out || conv1.in_channels() != in) {
    throw std::invalid_argument("repconv_fold: branch shapes do not align");
  }
  FusedConv<T> fc{Tensor<T>({out, in, 3, 3}), Tensor<T>({out})};
  const Tensor<T>& k3 = conv3.weight.value();
  const Tensor<T>& k1 = conv1.weight.value();
  // Folded in double so fp32 kernels carry one rounding per weight.
  for (int64_t o = 0; o < out; ++o) {
    const double d3 = static_cast<double>(bn3.running_var[o]) + static_cast<double>(bn3.eps());
    const double d1 = static_cast<double>(bn1.running_var[o]) + static_cast<double>(bn1.eps());
    if (!(d3 > 0.0) || !(d1 > 0.0)) {
      throw std::invalid_argument("repconv_fold: running variance + eps must be positive (channel " +
                                  std::to_string(o) + ")");
    }
    const double s3 = static_cast<double>(bn3.gamma.value()[o]) / std::sqrt(d3);
    const double s1 = static_cast<double>(bn1.gamma.value()[o]) / std::sqrt(d1);
    for (int64_t i = 0; i < in; ++i) {
      for (int64_t t = 0; t < 9; ++t) {
        double w = static_cast<double>(k3[(o * in + i) * 9 + t]) * s3;
        if (t == 4) w += static_cast<double>(k1[o * in + i]) * s1;
        fc.weight[(o * in + i) * 9 + t] = static_cast<T>(w);
      }
    }
    fc.bias[o] = static_cast<T>((static_cast<double>(bn3.beta.value()[o]) - bn3.running_mean[o] * s3) +
                                (static_cast<double>(bn1.beta.value()[o]) - bn1.running_mean[o] * s1));
  }
  return fc;
}

template <typename T>
void RepConv<T>::install(FusedConv<T> fc, bool keep_branches) {
  std::mt19937_64 unused(0);
  fused_conv_ = std::make_unique<Conv2d<T>>(in_, out_, 3, true, unused);
  fused_conv_->weight.mutable_value() = std::move(fc.weight);
  fused_conv_->bias.mutable_value() = std::move(fc.bias);
  fused_ = true;
  if (!keep_branches) {
    conv3.reset();
    bn3.reset();
    conv1.reset();
    bn1.reset();
  }
  register_all();
}

template <typename T>
void RepConv<T>::fuse(bool keep_branches) {
  if (fused_) throw std::logic_error("repconv: already fused");
  install(repconv_fold(*conv3, *bn3, *conv1, *bn1), keep_branches);
}

template <typename T>
void RepConv<T>::prepare_fused() {
  if (fused_) return;
  install(FusedConv<T>{Tensor<T>({out_, in_, 3, 3}), Tensor<T>({out_})}, false);
}

namespace {
int64_t afam_path_a(const AfamConfig& cfg) { return cfg.split_channels ? cfg.channels / 2 : cfg.channels; }
int64_t afam_path_b(const AfamConfig& cfg) { return cfg.split_channels ? cfg.channels - cfg.channels / 2 : cfg.channels; }
}  // namespace

template <typename T>
Afam<T>::Afam(const AfamConfig& cfg, std::mt19937_64& rng)
    : channel_reduce((cfg.validate(), cfg.channels), cfg.channels / cfg.reduction, 1, true, rng),
      channel_expand(cfg.channels / cfg.reduction, cfg.channels, 1, true, rng),
      conv_a(afam_path_a(cfg), afam_path_a(cfg), cfg.kernel_a, true, rng),
      conv_b(afam_path_a(cfg), afam_path_a(cfg), cfg.kernel_b, true, rng),
      repconv(2 * afam_path_a(cfg), afam_path_a(cfg), rng),
      out_proj(afam_path_a(cfg) + afam_path_b(cfg), cfg.channels, 1, true, rng),
      cfg_(cfg) {
  this->register_module("channel_att.reduce", channel_reduce);
  this->register_module("channel_att.expand", channel_expand);
  this->register_module("conv_a", conv_a);
  this->register_module("conv_b", conv_b);
  this->register_module("repconv", repconv);
  this->register_module("out_proj", out_proj);
}

template <typename T>
Var<T> Afam<T>::forward(const Var<T>& x, AfamTrace<T>* trace) const {
  check_channels(x, cfg_.channels, "afam");
  const Var<T> channel_w =
      ops::sigmoid(channel_expand.forward(ops::relu(channel_reduce.forward(ops::spatial_mean(x)))));
  const Var<T> weighted = ops::mul(x, channel_w);

  Var<T> in_a = weighted, in_b = weighted;
  if (cfg_.split_channels) {
    const int64_t half = cfg_.channels / 2;
    in_a = ops::slice_channels(weighted, 0, half);
    in_b = ops::slice_channels(weighted, half, cfg_.channels);
  }

  const Var<T> branches[] = {conv_a.forward(in_a), conv_b.forward(in_a)};
  const Var<T> path_a = repconv.forward(ops::concat_channels<T>(branches));

  const Var<T> spatial_w = ops::sigmoid(ops::add(ops::channel_max(in_b), ops::channel_mean(in_b)));
  const Var<T> path_b = ops::mul(in_b, spatial_w);

  if (trace) {
    trace->channel_weights = channel_w.value();
    trace->spatial_weights = spatial_w.value();
  }
  const Var<T> paths[] = {path_a, path_b};
  return out_proj.forward(ops::concat_channels<T>(paths));
}

template class TransformerBranch<float>;
template class TransformerBranch<double>;
template class CodebookBranch<float>;
template class CodebookBranch<double>;
template class Spam<float>;
template class Spam<double>;
template class RepConv<float>;
template class RepConv<double>;
template FusedConv<float> repconv_fold(const Conv2d<float>&, const BatchNorm2d<float>&, const Conv2d<float>&,
                                       const BatchNorm2d<float>&);
template FusedConv<double> repconv_fold(const Conv2d<double>&, const BatchNorm2d<double>&, const Conv2d<double>&,
                                        const BatchNorm2d<double>&);
template class Afam<float>;
template class Afam<double>;

}  // namespace crowdpoint
