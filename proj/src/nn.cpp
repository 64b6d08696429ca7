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

#include "crowdpoint/nn.hpp"

#include <cmath>

namespace crowdpoint {

namespace {
std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}
}  // namespace

template <typename T>
std::vector<NamedParameter<T>> Module<T>::named_parameters(const std::string& prefix) {
  std::vector<NamedParameter<T>> out;
  for (auto& [name, var] : params_) out.push_back({join(prefix, name), var});
  for (auto& [name, child] : children_) {
    auto sub = child->named_parameters(join(prefix, name));
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

template <typename T>
std::vector<NamedBuffer<T>> Module<T>::named_buffers(const std::string& prefix) {
  std::vector<NamedBuffer<T>> out;
  for (auto& [name, t] : buffers_) out.push_back({join(prefix, name), t});
  for (auto& [name, child] : children_) {
    auto sub = child->named_buffers(join(prefix, name));
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

template <typename T>
int64_t Module<T>::parameter_count() {
  int64_t n = 0;
  for (const auto& p : named_parameters()) n += p.var->value().numel();
  return n;
}

template <typename T>
void Module<T>::set_training(bool training) {
  training_ = training;
  for (auto& [name, child] : children_) child->set_training(training);
}

template <typename T>
void Module<T>::zero_grad() {
  for (auto& p : named_parameters()) p.var->zero_grad();
}

template <typename T>
Var<T>& Module<T>::register_parameter(std::string name, Var<T>& var) {
  params_.emplace_back(std::move(name), &var);
  return var;
}

template <typename T>
void Module<T>::register_buffer(std::string name, Tensor<T>& tensor) {
  buffers_.emplace_back(std::move(name), &tensor);
}

template <typename T>
void Module<T>::register_module(std::string name, Module& child) {
  child.set_training(training_);
  children_.emplace_back(std::move(name), &child);
}

template <typename T>
void Module<T>::clear_registrations() {
  params_.clear();
  buffers_.clear();
  children_.clear();
}

template <typename T>
Tensor<T> kaiming_normal(Shape shape, int64_t fan_in, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Conv2d<T>::Conv2d(int64_t in_channels, int64_t out_channels, int64_t kernel, bool bias, std::mt19937_64& rng)
    : has_bias_(bias) {
  weight = Var<T>(kaiming_normal<T>({out_channels, in_channels, kernel, kernel}, in_channels * kernel * kernel, rng),
                  true);
  this->register_parameter("weight", weight);
  if (bias) {
    this->bias = Var<T>(Tensor<T>({out_channels}), true);
    this->register_parameter("bias", this->bias);
  }
}

template <typename T>
Var<T> Conv2d<T>::forward(const Var<T>& x) const {
  return ops::conv2d(x, weight, has_bias_ ? &bias : nullptr);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int64_t channels, T eps, T momentum)
    : gamma(Tensor<T>({channels}, T(1)), true),
      beta(Tensor<T>({channels}), true),
      running_mean({channels}, T(0)),
      running_var({channels}, T(1)),
      eps_(eps),
      momentum_(momentum) {
  this->register_parameter("weight", gamma);
  this->register_parameter("bias", beta);
  this->register_buffer("running_mean", running_mean);
  this->register_buffer("running_var", running_var);
}

template <typename T>
Var<T> BatchNorm2d<T>::forward(const Var<T>& x) {
  return ops::batch_norm2d(x, gamma, beta, running_mean, running_var, this->training(), momentum_, eps_);
}

template <typename T>
Linear<T>::Linear(int64_t in_features, int64_t out_features, std::mt19937_64& rng) {
  Tensor<T> w({out_features, in_features});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(dist(rng));
  weight = Var<T>(std::move(w), true);
  bias = Var<T>(Tensor<T>({out_features}), true);
  this->register_parameter("weight", weight);
  this->register_parameter("bias", bias);
}

template <typename T>
Var<T> Linear<T>::forward(const Var<T>& x) const {
  return ops::linear(x, weight, &bias);
}

template <typename T>
LayerNorm<T>::LayerNorm(int64_t channels, T eps)
    : gamma(Tensor<T>({channels}, T(1)), true), beta(Tensor<T>({channels}), true), eps_(eps) {
  this->register_parameter("weight", gamma);
  this->register_parameter("bias", beta);
}

template <typename T>
Var<T> LayerNorm<T>::forward(const Var<T>& x) const {
  return ops::layer_norm(x, gamma, beta, eps_);
}

template <typename T>
ConvRelu<T>::ConvRelu(int64_t in_channels, int64_t out_channels, std::mt19937_64& rng)
    : conv(in_channels, out_channels, 3, true, rng) {
  this->register_module("conv", conv);
}

template <typename T>
Var<T> ConvRelu<T>::forward(const Var<T>& x) const {
  return ops::relu(conv.forward(x));
}

template class Module<float>;
template class Module<double>;
template Tensor<float> kaiming_normal<float>(Shape, int64_t, std::mt19937_64&);
template Tensor<double> kaiming_normal<double>(Shape, int64_t, std::mt19937_64&);
template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class Linear<float>;
template class Linear<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class ConvRelu<float>;
template class ConvRelu<double>;

}  // namespace crowdpoint
