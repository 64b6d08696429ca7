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

#include "crowdpoint/optim.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace crowdpoint {

Adam::Adam(std::vector<NamedParameter<float>> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var->shape());
    v_.emplace_back(p.var->shape());
  }
}

void Adam::step() {
  ++t_;
  const double b1 = opts_.beta1, b2 = opts_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const float step = static_cast<float>(opts_.lr / c1);
  const float root_c2 = static_cast<float>(std::sqrt(c2));
  const float eps = static_cast<float>(opts_.eps), wd = static_cast<float>(opts_.weight_decay);
  const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  for (size_t i = 0; i < params_.size(); ++i) {
    Var<float>& p = *params_[i].var;
    if (!p.has_grad()) continue;
    float* w = p.mutable_value().data();
    const float* g = p.grad().data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    const int64_t n = p.value().numel();
    for (int64_t k = 0; k < n; ++k) {
      const float gk = g[k] + wd * w[k];
      m[k] = fb1 * m[k] + (1.0f - fb1) * gk;
      v[k] = fb2 * v[k] + (1.0f - fb2) * gk * gk;
      w[k] -= step * m[k] / (std::sqrt(v[k]) / root_c2 + eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.var->zero_grad();
}

std::vector<TensorEntry> Adam::state() const {
  std::vector<TensorEntry> out;
  for (size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"m." + params_[i].name, m_[i].shape(), m_[i].to_vector()});
    out.push_back({"v." + params_[i].name, v_[i].shape(), v_[i].to_vector()});
  }
  return out;
}

void Adam::load_state(const std::vector<TensorEntry>& entries, int64_t steps) {
  std::map<std::string, const TensorEntry*> by_name;
  for (const auto& e : entries) by_name.emplace(e.name, &e);
  std::string bad;
  for (size_t i = 0; i < params_.size(); ++i) {
    for (const char* kind : {"m.", "v."}) {
      const std::string name = kind + params_[i].name;
      const auto it = by_name.find(name);
      if (it == by_name.end() || it->second->shape != params_[i].var->shape()) {
        bad += (bad.empty() ? "" : ", ") + name;
        continue;
      }
      Tensor<float>& dst = kind[0] == 'm' ? m_[i] : v_[i];
      dst = Tensor<float>(it->second->shape, it->second->data);
    }
  }
  if (!bad.empty()) throw std::runtime_error("optimizer state does not match the model: [" + bad + "]");
  t_ = steps;
}

}  // namespace crowdpoint
