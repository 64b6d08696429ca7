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
#include <string>
#include <utility>
#include <vector>

#include "crowdpoint/ops.hpp"

namespace crowdpoint {

template <typename T>
struct NamedParameter {
  std::string name;
  Var<T>* var;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};

// Base for layers holding learned state. Parameters, buffers and children are
// registered by pointer to members, so modules are neither copyable nor movable.
template <typename T>
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  // Hierarchical names: "<child>.<child>.<param>".
  std::vector<NamedParameter<T>> named_parameters(const std::string& prefix = "");
  std::vector<NamedBuffer<T>> named_buffers(const std::string& prefix = "");
  int64_t parameter_count();

  void set_training(bool training);
  bool training() const { return training_; }
  void zero_grad();

 protected:
  Var<T>& register_parameter(std::string name, Var<T>& var);
  void register_buffer(std::string name, Tensor<T>& tensor);
  void register_module(std::string name, Module& child);
  void clear_registrations();

 private:
  std::vector<std::pair<std::string, Var<T>*>> params_;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
  bool training_ = true;
};

// Kaiming-normal (fan-in, ReLU gain) initialized tensor.
template <typename T>
Tensor<T> kaiming_normal(Shape shape, int64_t fan_in, std::mt19937_64& rng);

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(int64_t in_channels, int64_t out_channels, int64_t kernel, bool bias, std::mt19937_64& rng);
  Var<T> forward(const Var<T>& x) const;

  int64_t in_channels() const { return weight.dim(1); }
  int64_t out_channels() const { return weight.dim(0); }
  int64_t kernel() const { return weight.dim(2); }
  bool has_bias() const { return has_bias_; }

  Var<T> weight;
  Var<T> bias;

 private:
  bool has_bias_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(int64_t channels, T eps = T(1e-5), T momentum = T(0.1));
  Var<T> forward(const Var<T>& x);

  T eps() const { return eps_; }

  Var<T> gamma;
  Var<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;

 private:
  T eps_;
  T momentum_;
};

template <typename T>
class Linear : public Module<T> {
 public:
  Linear(int64_t in_features, int64_t out_features, std::mt19937_64& rng);
  Var<T> forward(const Var<T>& x) const;

  Var<T> weight;
  Var<T> bias;
};

template <typename T>
class LayerNorm : public Module<T> {
 public:
  explicit LayerNorm(int64_t channels, T eps = T(1e-5));
  Var<T> forward(const Var<T>& x) const;

  Var<T> gamma;
  Var<T> beta;

 private:
  T eps_;
};

// conv3x3 (+bias) followed by ReLU.
template <typename T>
class ConvRelu : public Module<T> {
 public:
  ConvRelu(int64_t in_channels, int64_t out_channels, std::mt19937_64& rng);
  Var<T> forward(const Var<T>& x) const;

  Conv2d<T> conv;
};

extern template class Module<float>;
extern template class Module<double>;
extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class BatchNorm2d<float>;
extern template class BatchNorm2d<double>;
extern template class Linear<float>;
extern template class Linear<double>;
extern template class LayerNorm<float>;
extern template class LayerNorm<double>;
extern template class ConvRelu<float>;
extern template class ConvRelu<double>;

}  // namespace crowdpoint
