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

#include <span>

#include "crowdpoint/autograd.hpp"

// Differentiable tensor operations. Feature maps are N x C x H x W, token
// sequences are N x L x C. Every op records its backward closure through
// make_result, so the same calls serve training and inference.
namespace crowdpoint::ops {

// Elementwise a + b / a * b where b has the rank of a and each of its
// dimensions either matches a or equals 1 (broadcast).
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);

template <typename T>
Var<T> relu(const Var<T>& x);
template <typename T>
Var<T> sigmoid(const Var<T>& x);
template <typename T>
Var<T> gelu(const Var<T>& x);

// Stride-1 "same" convolution, zero padding of kernel/2. `bias` may be null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>* bias);

template <typename T>
Var<T> max_pool2x2(const Var<T>& x);

// x2 bilinear upsampling with half-pixel centers (align_corners = false).
template <typename T>
Var<T> upsample_bilinear2x(const Var<T>& x);

// In training mode normalizes with batch statistics and updates the running
// buffers; otherwise normalizes with the running buffers.
template <typename T>
Var<T> batch_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                    Tensor<T>& running_var, bool training, T momentum, T eps);

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> xs);
template <typename T>
Var<T> slice_channels(const Var<T>& x, int64_t begin, int64_t end);

// N x C x H x W -> N x C x 1 x 1
template <typename T>
Var<T> spatial_mean(const Var<T>& x);
// N x C x H x W -> N x 1 x H x W
template <typename T>
Var<T> channel_mean(const Var<T>& x);
template <typename T>
Var<T> channel_max(const Var<T>& x);

// N x C x H x W <-> N x (H*W) x C
template <typename T>
Var<T> to_tokens(const Var<T>& x);
template <typename T>
Var<T> from_tokens(const Var<T>& tokens, int64_t height, int64_t width);

// x: N x L x I, weight: O x I, bias: O (nullable) -> N x L x O
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>* bias);
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps);

// Scaled dot-product attention over `heads` equal channel groups of q, k, v
// (each N x L x C). When `weights` is non-null it receives the softmax
// matrices, N x heads x L x L.
template <typename T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads, Tensor<T>* weights);

// Soft assignment of every token (N x L x C) to a K x C dictionary:
// softmax over codes of x.code / sqrt(C), returns the weighted code sum.
// When `weights` is non-null it receives the assignments, N x L x K.
template <typename T>
Var<T> codebook_attention(const Var<T>& x, const Var<T>& codes, Tensor<T>* weights);

template <typename T>
Var<T> sum(const Var<T>& x);
// sum(x * w) for a constant w of the same shape.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& w);

}  // namespace crowdpoint::ops
