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
#include <span>
#include <utility>
#include <vector>

#include "crowdpoint/data.hpp"
#include "crowdpoint/decoder.hpp"

namespace crowdpoint {

// Dense P x N matrix, row = proposal, column = ground-truth point.
struct CostMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> costs;

  CostMatrix() = default;
  CostMatrix(int64_t p, int64_t n, double fill = 0.0) : rows(p), cols(n), costs(static_cast<size_t>(p * n), fill) {}
  CostMatrix(std::initializer_list<std::initializer_list<double>> values);

  double& operator()(int64_t p, int64_t g) { return costs[static_cast<size_t>(p * cols + g)]; }
  double operator()(int64_t p, int64_t g) const { return costs[static_cast<size_t>(p * cols + g)]; }
};

struct Assignment {
  // (proposal, gt) sorted by proposal index.
  std::vector<std::pair<int64_t, int64_t>> pairs;
  // Sum of the matched entries taken in proposal order.
  double total_cost = 0.0;
};

struct LossWeights {
  double w_loc = 2e-4;
  double w_cost_loc = 0.05;
  // When false the matching cost is w_cost_loc * distance only.
  bool cost_uses_score = true;

  void validate() const;
};

// cost[p][g] = w_cost_loc * |proposal_p - gt_g| - score_p. Throws
// std::invalid_argument when either side is empty.
CostMatrix build_cost(std::span<const ScoredPoint> proposals, std::span<const Point> gts, const LossWeights& w);

// Minimum-cost one-to-one assignment of size min(P, N). Among optimal
// assignments the lexicographically smallest pair list is returned. Throws
// std::invalid_argument on non-finite entries.
Assignment hungarian(const CostMatrix& costs);

struct LossBreakdown {
  double cls = 0.0;  // mean BCE over all proposals, batch mean
  double reg = 0.0;  // mean squared distance over matched pairs, batch mean
  int64_t matches = 0;
};

template <typename T>
struct LossResult {
  Var<T> loss;
  LossBreakdown breakdown;
};

// Set-prediction loss on all (unthresholded) proposals of every image in the
// batch: cls + w_loc * reg per image, averaged over the batch. The matching is
// held fixed in the backward pass. `gts[b]` are the points of image b.
template <typename T>
LossResult<T> compute_loss(const DenseOutput<T>& dense, const std::vector<Point>& anchors,
                           std::span<const std::vector<Point>> gts, const LossWeights& w);

}  // namespace crowdpoint
