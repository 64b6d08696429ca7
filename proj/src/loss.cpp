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

#include <cmath>
#include <stdexcept>

#include "crowdpoint/matching.hpp"

namespace crowdpoint {

namespace {

// Numerically stable -[y log sigmoid(z) + (1 - y) log(1 - sigmoid(z))].
double bce_with_logit(double z, double y) { return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

template <typename T>
LossResult<T> compute_loss(const DenseOutput<T>& dense, const std::vector<Point>& anchors,
                           std::span<const std::vector<Point>> gts, const LossWeights& w) {
  w.validate();
  const Tensor<T>& off = dense.offsets.value();
  const Tensor<T>& logit = dense.logits.value();
  if (off.rank() != 4 || logit.rank() != 4 || off.dim(1) != 2 || logit.dim(1) != 1 || off.dim(0) != logit.dim(0) ||
      off.dim(2) != logit.dim(2) || off.dim(3) != logit.dim(3)) {
    throw std::invalid_argument("compute_loss: malformed dense output " + shape_str(off.shape()) + " / " +
                                shape_str(logit.shape()));
  }
  const int64_t batch = logit.dim(0), cells = logit.dim(2) * logit.dim(3);
  if (static_cast<int64_t>(anchors.size()) != cells) {
    throw std::invalid_argument("compute_loss: " + std::to_string(anchors.size()) + " anchors for " +
                                std::to_string(cells) + " grid cells");
  }
  if (static_cast<int64_t>(gts.size()) != batch) {
    throw std::invalid_argument("compute_loss: " + std::to_string(gts.size()) + " point sets for batch of " +
                                std::to_string(batch));
  }

  // Gradients w.r.t. logits and offsets are fixed once the matching is known.
  Tensor<T> g_logit(logit.shape()), g_off(off.shape());
  LossBreakdown br;
  double total = 0.0;
  std::vector<ScoredPoint> proposals(static_cast<size_t>(cells));
  std::vector<double> label(static_cast<size_t>(cells));
  for (int64_t b = 0; b < batch; ++b) {
    const T* dx = off.data() + b * 2 * cells;
    const T* dy = dx + cells;
    const T* z = logit.data() + b * cells;
    for (int64_t k = 0; k < cells; ++k) {
      proposals[static_cast<size_t>(k)] = {anchors[static_cast<size_t>(k)].x + static_cast<double>(dx[k]),
                                           anchors[static_cast<size_t>(k)].y + static_cast<double>(dy[k]),
                                           sigmoid(static_cast<double>(z[k]))};
    }
    std::fill(label.begin(), label.end(), 0.0);
    const auto& scene_gts = gts[static_cast<size_t>(b)];
    double reg = 0.0;
    T* gdx = g_off.data() + b * 2 * cells;
    T* gdy = gdx + cells;
    if (!scene_gts.empty()) {
      const Assignment a = hungarian(build_cost(proposals, scene_gts, w));
      const double inv_m = 1.0 / static_cast<double>(a.pairs.size());
      for (const auto& [p, g] : a.pairs) {
        label[static_cast<size_t>(p)] = 1.0;
        const double rx = proposals[static_cast<size_t>(p)].x - scene_gts[static_cast<size_t>(g)].x;
        const double ry = proposals[static_cast<size_t>(p)].y - scene_gts[static_cast<size_t>(g)].y;
        reg += (rx * rx + ry * ry) * inv_m;
        gdx[p] = static_cast<T>(w.w_loc * 2.0 * rx * inv_m / static_cast<double>(batch));
        gdy[p] = static_cast<T>(w.w_loc * 2.0 * ry * inv_m / static_cast<double>(batch));
      }
      br.matches += static_cast<int64_t>(a.pairs.size());
    }
    double cls = 0.0;
    T* gz = g_logit.data() + b * cells;
    const double inv_p = 1.0 / static_cast<double>(cells);
    for (int64_t k = 0; k < cells; ++k) {
      const double zk = static_cast<double>(z[k]);
      cls += bce_with_logit(zk, label[static_cast<size_t>(k)]) * inv_p;
      gz[k] = static_cast<T>((proposals[static_cast<size_t>(k)].score - label[static_cast<size_t>(k)]) * inv_p /
                             static_cast<double>(batch));
    }
    br.cls += cls / static_cast<double>(batch);
    br.reg += reg / static_cast<double>(batch);
    total += (cls + w.w_loc * reg) / static_cast<double>(batch);
  }

  auto* on = dense.offsets.node().get();
  auto* ln = dense.logits.node().get();
  Var<T> loss = make_result<T>(Tensor<T>({1}, static_cast<T>(total)), {dense.offsets.node(), dense.logits.node()},
                               [on, ln, g_off = std::move(g_off), g_logit = std::move(g_logit)](Node<T>& self) {
                                 const T g = self.grad[0];
                                 Tensor<T>& go = on->grad_buffer();
                                 for (int64_t i = 0; i < go.numel(); ++i) go[i] += g * g_off[i];
                                 Tensor<T>& gl = ln->grad_buffer();
                                 for (int64_t i = 0; i < gl.numel(); ++i) gl[i] += g * g_logit[i];
                               });
  return {loss, br};
}

template LossResult<float> compute_loss(const DenseOutput<float>&, const std::vector<Point>&,
                                        std::span<const std::vector<Point>>, const LossWeights&);
template LossResult<double> compute_loss(const DenseOutput<double>&, const std::vector<Point>&,
                                         std::span<const std::vector<Point>>, const LossWeights&);

}  // namespace crowdpoint
