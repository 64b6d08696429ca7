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

#include <doctest.h>

#include <cmath>

#include "crowdpoint/matching.hpp"
#include "oracles.hpp"

using namespace crowdpoint;

namespace {

DenseOutput<double> dense(int64_t h, int64_t w, double logit = 0.0) {
  return {Var<double>(Tensor<double>({1, 2, h, w}), true), Var<double>(Tensor<double>({1, 1, h, w}, logit), true)};
}

LossResult<double> loss_of(const DenseOutput<double>& d, const std::vector<Point>& gts, const LossWeights& w) {
  const std::vector<std::vector<Point>> batch{gts};
  return compute_loss(d, make_anchors(2 * d.logits.dim(2), 2 * d.logits.dim(3), 2), batch, w);
}

}  // namespace

TEST_CASE("proposals on their targets have zero regression") {
  auto d = dense(2, 2);
  const auto r = loss_of(d, {{1, 1}, {3, 3}}, {});
  CHECK(r.breakdown.reg == 0.0);
  CHECK(r.breakdown.matches == 2);
}

TEST_CASE("squared 3-4-5 residual") {
  auto d = dense(1, 1);
  d.offsets.mutable_value()[0] = 3.0;
  d.offsets.mutable_value()[1] = 4.0;
  LossWeights w;
  w.w_loc = 1.0;
  const auto r = loss_of(d, {{1, 1}}, w);
  CHECK(r.breakdown.reg == doctest::Approx(25.0));
  CHECK(r.loss.value()[0] == doctest::Approx(r.breakdown.cls + 25.0));
}

TEST_CASE("an empty scene is classification only and vanishes as logits fall") {
  double prev = std::numeric_limits<double>::infinity();
  for (double z : {0.0, -5.0, -20.0, -40.0}) {
    auto d = dense(2, 2, z);
    const auto r = loss_of(d, {}, {});
    CHECK(r.breakdown.matches == 0);
    CHECK(r.breakdown.reg == 0.0);
    CHECK(r.loss.value()[0] == doctest::Approx(r.breakdown.cls));
    CHECK(r.breakdown.cls < prev);
    prev = r.breakdown.cls;
  }
  CHECK(prev < 1e-15);
}

TEST_CASE("the loss is non-negative") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    DenseOutput<double> d{Var<double>(oracle::random_tensor<double>({1, 2, 3, 3}, rng, -3, 3), true),
                          Var<double>(oracle::random_tensor<double>({1, 1, 3, 3}, rng, -6, 6), true)};
    CHECK(loss_of(d, {{1.5, 2.5}, {4.0, 0.5}}, {}).loss.value()[0] >= 0.0);
  }
}

TEST_CASE("batch loss is the mean of per-image losses") {
  std::mt19937_64 rng(4);
  DenseOutput<double> d{Var<double>(oracle::random_tensor<double>({2, 2, 2, 2}, rng), true),
                        Var<double>(oracle::random_tensor<double>({2, 1, 2, 2}, rng), true)};
  const std::vector<std::vector<Point>> gts{{{1, 1}}, {{2, 3}, {3, 1}}};
  const auto anchors = make_anchors(4, 4, 2);
  const double both = compute_loss(d, anchors, gts, {}).loss.value()[0];
  double sum = 0.0;
  for (int64_t b = 0; b < 2; ++b) {
    DenseOutput<double> one{Var<double>(Tensor<double>({1, 2, 2, 2})), Var<double>(Tensor<double>({1, 1, 2, 2}))};
    std::copy(d.offsets.value().data() + b * 8, d.offsets.value().data() + b * 8 + 8, one.offsets.mutable_value().data());
    std::copy(d.logits.value().data() + b * 4, d.logits.value().data() + b * 4 + 4, one.logits.mutable_value().data());
    const std::vector<std::vector<Point>> g{gts[static_cast<size_t>(b)]};
    sum += compute_loss(one, anchors, g, {}).loss.value()[0];
  }
  CHECK(both == doctest::Approx(sum / 2.0));
}

TEST_CASE("misaligned inputs are rejected") {
  auto d = dense(2, 2);
  const std::vector<std::vector<Point>> one{{}};
  CHECK_THROWS(compute_loss(d, make_anchors(2, 2, 2), one, {}));
  const std::vector<std::vector<Point>> two{{}, {}};
  CHECK_THROWS(compute_loss(d, make_anchors(4, 4, 2), two, {}));
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(11);
  DenseOutput<double> d{Var<double>(oracle::random_tensor<double>({1, 2, 4, 4}, rng, -2, 2), true),
                        Var<double>(oracle::random_tensor<double>({1, 1, 4, 4}, rng, -3, 3), true)};
  LossWeights w;
  w.w_loc = 0.05;
  const std::vector<std::vector<Point>> gts{{{1.2, 3.1}, {5.5, 6.0}, {7.0, 0.4}}};
  const auto anchors = make_anchors(8, 8, 2);
  const auto res = oracle::check_gradients([&] { return compute_loss(d, anchors, gts, w).loss; },
                                           {&d.offsets, &d.logits});
  CHECK(res.max_rel_error <= 1e-3);
}
