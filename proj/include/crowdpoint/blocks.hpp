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

#include <memory>
#include <random>
#include <string>

#include "crowdpoint/nn.hpp"

namespace crowdpoint {

enum class SpamFuse { kSum, kConcatProject };

std::string to_string(SpamFuse f);
SpamFuse parse_spam_fuse(const std::string& s);

struct SpamConfig {
  int64_t channels = 32;
  int heads = 2;
  int64_t codebook_size = 32;
  SpamFuse fuse = SpamFuse::kSum;
  int64_t ff_expansion = 2;

  void validate() const;
};

struct AfamConfig {
  int64_t channels = 32;
  int64_t reduction = 4;
  int64_t kernel_a = 3;
  int64_t kernel_b = 5;
  // Route the first half of the channels to the RepConv path and the second
  // half to the spatial-attention path instead of the full tensor to both.
  bool split_channels = false;

  void validate() const;
};

// Pre-norm transformer encoder layer applied to the H*W positions as tokens.
template <typename T>
class TransformerBranch : public Module<T> {
 public:
  TransformerBranch(int64_t channels, int heads, int64_t ff_expansion, std::mt19937_64& rng);

  // `attention`, when non-null, receives the N x heads x L x L softmax rows.
  Var<T> forward(const Var<T>& x, Tensor<T>* attention = nullptr) const;

  int heads() const { return heads_; }

  LayerNorm<T> ln1;
  Linear<T> query;
  Linear<T> key;
  Linear<T> value;
  Linear<T> out;
  LayerNorm<T> ln2;
  Linear<T> ff1;
  Linear<T> ff2;

 private:
  int64_t channels_;
  int heads_;
};

// Residual soft reconstruction from a learned K x C dictionary.
template <typename T>
class CodebookBranch : public Module<T> {
 public:
  CodebookBranch(int64_t channels, int64_t codebook_size, std::mt19937_64& rng);

  // `assignments`, when non-null, receives the N x L x K soft assignments.
  Var<T> forward(const Var<T>& x, Tensor<T>* assignments = nullptr) const;

  Var<T> codes;
};

template <typename T>
struct SpamTrace {
  Tensor<T> attention;
  Tensor<T> assignments;
};

// Transformer, 3x3 convolution and codebook branches on the same input, each
// with a 1x1 output projection, fused and projected back to C channels.
template <typename T>
class Spam : public Module<T> {
 public:
  Spam(const SpamConfig& cfg, std::mt19937_64& rng);

  Var<T> forward(const Var<T>& x, SpamTrace<T>* trace = nullptr) const;

  const SpamConfig& config() const { return cfg_; }

  TransformerBranch<T> transformer;
  ConvRelu<T> conv;
  CodebookBranch<T> codebook;
  Conv2d<T> transformer_proj;
  Conv2d<T> conv_proj;
  Conv2d<T> codebook_proj;
  Conv2d<T> fuse_proj;

 private:
  SpamConfig cfg_;
};

enum class RepConvMode { kTrain, kFused };

template <typename T>
struct FusedConv {
  Tensor<T> weight;  // O x I x 3 x 3
  Tensor<T> bias;    // O
};

// Parallel BN(conv3x3) and BN(conv1x1) followed by ReLU, foldable into one
// biased 3x3 convolution.
template <typename T>
class RepConv : public Module<T> {
 public:
  RepConv(int64_t in_channels, int64_t out_channels, std::mt19937_64& rng, T bn_eps = T(1e-5));

  // Throws std::logic_error for kFused before fuse() and for kTrain once the
  // branches have been dropped.
  Var<T> forward(const Var<T>& x, RepConvMode mode) const;
  Var<T> forward(const Var<T>& x) const { return forward(x, fused_ ? RepConvMode::kFused : RepConvMode::kTrain); }

  // Folds the branches into a single kernel. Unless `keep_branches`, the
  // branch parameters are released and only the fused kernel stays registered.
  void fuse(bool keep_branches = false);
  bool fused() const { return fused_; }
  bool has_branches() const { return conv3 != nullptr; }
  int64_t in_channels() const { return in_; }
  int64_t out_channels() const { return out_; }

  std::unique_ptr<Conv2d<T>> conv3;
  std::unique_ptr<BatchNorm2d<T>> bn3;
  std::unique_ptr<Conv2d<T>> conv1;
  std::unique_ptr<BatchNorm2d<T>> bn1;

  // Registers an empty fused kernel in place of the branches so fused
  // parameters can be loaded by name.
  void prepare_fused();
  const Conv2d<T>* fused_conv() const { return fused_conv_.get(); }

 private:
  void install(FusedConv<T> fc, bool keep_branches);
  void register_all();

  int64_t in_;
  int64_t out_;
  bool fused_ = false;
  std::unique_ptr<Conv2d<T>> fused_conv_;
};

// BN folding: scale = gamma / sqrt(var + eps) per output channel, the 1x1
// kernel zero-padded to the 3x3 center, kernels and biases summed.
// Throws std::invalid_argument when var + eps <= 0.
template <typename T>
FusedConv<T> repconv_fold(const Conv2d<T>& conv3, const BatchNorm2d<T>& bn3, const Conv2d<T>& conv1,
                          const BatchNorm2d<T>& bn1);

template <typename T>
struct AfamTrace {
  Tensor<T> channel_weights;  // N x C x 1 x 1
  Tensor<T> spatial_weights;  // N x 1 x H x W
};

template <typename T>
class Afam : public Module<T> {
 public:
  Afam(const AfamConfig& cfg, std::mt19937_64& rng);

  Var<T> forward(const Var<T>& x, AfamTrace<T>* trace = nullptr) const;

  const AfamConfig& config() const { return cfg_; }

  Conv2d<T> channel_reduce;
  Conv2d<T> channel_expand;
  Conv2d<T> conv_a;
  Conv2d<T> conv_b;
  RepConv<T> repconv;
  Conv2d<T> out_proj;

 private:
  AfamConfig cfg_;
};

extern template class TransformerBranch<float>;
extern template class TransformerBranch<double>;
extern template class CodebookBranch<float>;
extern template class CodebookBranch<double>;
extern template class Spam<float>;
extern template class Spam<double>;
extern template class RepConv<float>;
extern template class RepConv<double>;
extern template class Afam<float>;
extern template class Afam<double>;

}  // namespace crowdpoint
