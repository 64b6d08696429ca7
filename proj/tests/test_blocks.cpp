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

#include <algorithm>
#include <cmath>

#include "crowdpoint/blocks.hpp"
#include "crowdpoint/ops.hpp"
#include "oracles.hpp"

using namespace crowdpoint;

namespace {

template <typename T>
Var<T> rand_var(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return Var<T>(oracle::random_tensor<T>(std::move(s), rng, lo, hi));
}

template <typename T>
void zero_conv(Conv2d<T>& c) {
  c.weight.mutable_value().fill(T(0));
  if (c.has_bias()) c.bias.mutable_value().fill(T(0));
}

template <typename T>
void identity_bn(BatchNorm2d<T>& bn) {
  bn.gamma.mutable_value().fill(T(1));
  bn.beta.mutable_value().fill(T(0));
  bn.running_mean.fill(T(0));
  bn.running_var.fill(T(1));
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST_CASE("transformer branch") {
  std::mt19937_64 rng(1);
  TransformerBranch<double> t(8, 2, 2, rng);
  const auto x = rand_var<double>({2, 8, 3, 5}, rng);
  Tensor<double> att;
  const auto y = t.forward(x, &att);
  CHECK(y.shape() == x.shape());
  REQUIRE(att.shape() == Shape{2, 2, 15, 15});
  for (int64_t r = 0; r < 2 * 2 * 15; ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < 15; ++c) s += att[r * 15 + c];
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }
  SUBCASE("a single token attends to itself") {
    Tensor<double> a1;
    t.forward(rand_var<double>({1, 8, 1, 1}, rng), &a1);
    CHECK(a1.shape() == Shape{1, 2, 1, 1});
    CHECK(a1[0] == doctest::Approx(1.0));
    CHECK(a1[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("codebook branch") {
  std::mt19937_64 rng(2);
  SUBCASE("one code is added everywhere") {
    CodebookBranch<double> cb(4, 1, rng);
    const auto x = rand_var<double>({1, 4, 3, 3}, rng);
    const auto y = cb.forward(x);
    for (int64_t c = 0; c < 4; ++c)
      for (int64_t i = 0; i < 9; ++i) {
        CHECK(y.value()[c * 9 + i] == doctest::Approx(x.value()[c * 9 + i] + cb.codes.value()[c]));
      }
  }
  SUBCASE("assignments are distributions and the code order is irrelevant") {
    CodebookBranch<double> cb(6, 5, rng);
    const auto x = rand_var<double>({2, 6, 4, 4}, rng);
    Tensor<double> w;
    const auto y = cb.forward(x, &w);
    REQUIRE(w.shape() == Shape{2, 16, 5});
    for (int64_t r = 0; r < 32; ++r) {
      double s = 0.0;
      for (int64_t k = 0; k < 5; ++k) s += w[r * 5 + k];
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
    Tensor<double> permuted = cb.codes.value();
    const int64_t order[] = {3, 0, 4, 1, 2};
    for (int64_t k = 0; k < 5; ++k)
      for (int64_t c = 0; c < 6; ++c) permuted[k * 6 + c] = cb.codes.value()[order[k] * 6 + c];
    cb.codes.mutable_value() = permuted;
    CHECK(max_abs_diff(cb.forward(x).value(), y.value()) < 1e-12);
  }
}

TEST_CASE("SPAM preserves shape and adds its branches") {
  std::mt19937_64 rng(3);
  SpamConfig cfg;
  cfg.channels = 32;
  cfg.heads = 4;
  cfg.codebook_size = 8;
  Spam<double> spam(cfg, rng);
  const auto x = rand_var<double>({1, 32, 8, 8}, rng);
  SpamTrace<double> trace;
  CHECK(spam.forward(x, &trace).shape() == x.shape());
  CHECK(trace.attention.shape() == Shape{1, 4, 64, 64});
  CHECK(trace.assignments.shape() == Shape{1, 64, 8});

  // Only the convolution branch remains once the other projections are zero.
  zero_conv(spam.transformer_proj);
  zero_conv(spam.codebook_proj);
  const auto expected = spam.fuse_proj.forward(spam.conv_proj.forward(spam.conv.forward(x)));
  CHECK(max_abs_diff(spam.forward(x).value(), expected.value()) < 1e-12);

  SUBCASE("concat fusion") {
    SpamConfig c2 = cfg;
    c2.fuse = SpamFuse::kConcatProject;
    Spam<double> s2(c2, rng);
    CHECK(s2.fuse_proj.in_channels() == 96);
    CHECK(s2.forward(x).shape() == x.shape());
  }
}

TEST_CASE("block configs are validated") {
  SpamConfig s;
  s.channels = 30;
  s.heads = 4;
  CHECK_THROWS(s.validate());
  AfamConfig a;
  a.kernel_b = 4;
  CHECK_THROWS(a.validate());
  a.kernel_b = 5;
  a.reduction = 5;
  CHECK_THROWS(a.validate());
  CHECK(parse_spam_fuse("concat_project") == SpamFuse::kConcatProject);
  CHECK_THROWS(parse_spam_fuse("max"));
}

TEST_CASE("AFAM") {
  std::mt19937_64 rng(4);
  for (bool split : {false, true}) {
    AfamConfig cfg;
    cfg.channels = 32;
    cfg.split_channels = split;
    Afam<float> afam(cfg, rng);
    const auto x = rand_var<float>({1, 32, 8, 8}, rng);
    AfamTrace<float> trace;
    CHECK(afam.forward(x, &trace).shape() == x.shape());
    CHECK(trace.channel_weights.shape() == Shape{1, 32, 1, 1});
    CHECK(trace.spatial_weights.shape() == Shape{1, 1, 8, 8});
    for (float v : trace.channel_weights.values()) CHECK((v > 0.0f && v < 1.0f));
    for (float v : trace.spatial_weights.values()) CHECK((v > 0.0f && v < 1.0f));

    afam.set_training(false);
    const auto y0 = afam.forward(Var<float>(Tensor<float>({1, 32, 8, 8}))).value();
    for (float v : y0.values()) CHECK(std::isfinite(v));
    // Zero input maps to an image of the biases, constant away from the
    // zero-padded border.
    for (int64_t c = 0; c < 32; ++c) CHECK(y0.at(0, c, 3, 3) == doctest::Approx(y0.at(0, c, 5, 4)).epsilon(1e-5));
  }
}

TEST_CASE("RepConv folding") {
  std::mt19937_64 rng(5);
  SUBCASE("identity BN and a zero 1x1 keep the 3x3 kernel") {
    RepConv<double> r(3, 4, rng, 0.0);
    identity_bn(*r.bn3);
    identity_bn(*r.bn1);
    zero_conv(*r.conv1);
    const auto fc = repconv_fold(*r.conv3, *r.bn3, *r.conv1, *r.bn1);
    CHECK(fc.weight == r.conv3->weight.value());
    CHECK(fc.bias == Tensor<double>({4}));
  }
  SUBCASE("a zero 3x3 puts the 1x1 kernel at the centre") {
    RepConv<double> r(3, 4, rng, 0.0);
    identity_bn(*r.bn3);
    identity_bn(*r.bn1);
    zero_conv(*r.conv3);
    const auto fc = repconv_fold(*r.conv3, *r.bn3, *r.conv1, *r.bn1);
    for (int64_t oi = 0; oi < 12; ++oi)
      for (int64_t t = 0; t < 9; ++t) CHECK(fc.weight[oi * 9 + t] == (t == 4 ? r.conv1->weight.value()[oi] : 0.0));
  }
  SUBCASE("zero input gives relu(bias) everywhere") {
    RepConv<double> r(3, 4, rng);
    r.bn3->beta.mutable_value() = oracle::random_tensor<double>({4}, rng);
    r.bn1->running_mean = oracle::random_tensor<double>({4}, rng);
    r.set_training(false);
    r.fuse();
    const auto y = r.forward(Var<double>(Tensor<double>({1, 3, 5, 5}))).value();
    for (int64_t o = 0; o < 4; ++o)
      for (int64_t i = 0; i < 25; ++i) CHECK(y[o * 25 + i] == std::max(0.0, r.fused_conv()->bias.value()[o]));
  }
  SUBCASE("non-positive variance is rejected") {
    RepConv<double> r(2, 2, rng, 0.0);
    r.bn3->running_var.fill(0.0);
    CHECK_THROWS_AS(repconv_fold(*r.conv3, *r.bn3, *r.conv1, *r.bn1), std::invalid_argument);
  }
  SUBCASE("mode guards") {
    RepConv<float> r(2, 2, rng);
    const auto x = rand_var<float>({1, 2, 4, 4}, rng);
    CHECK_THROWS_AS(r.forward(x, RepConvMode::kFused), std::logic_error);
    const int64_t before = r.parameter_count();
    r.set_training(false);
    r.fuse();
    CHECK(r.parameter_count() < before);
    CHECK_THROWS_AS(r.forward(x, RepConvMode::kTrain), std::logic_error);
    CHECK_THROWS_AS(r.fuse(), std::logic_error);
  }
  SUBCASE("kept branches agree with the fused kernel") {
    RepConv<double> r(4, 3, rng);
    r.bn3->running_var = oracle::random_tensor<double>({3}, rng, 0.5, 2.0);
    r.bn1->gamma.mutable_value() = oracle::random_tensor<double>({3}, rng);
    r.set_training(false);
    r.fuse(true);
    const auto x = rand_var<double>({2, 4, 6, 6}, rng, -10, 10);
    CHECK(max_abs_diff(r.forward(x, RepConvMode::kTrain).value(), r.forward(x, RepConvMode::kFused).value()) < 1e-10);
  }
}

TEST_CASE("SPAM and AFAM gradients match finite differences") {
  std::mt19937_64 rng(17);
  Var<double> x(oracle::random_tensor<double>({1, 8, 4, 4}, rng), true);
  const Tensor<double> probe = oracle::random_tensor<double>({1, 8, 4, 4}, rng);
  SUBCASE("SPAM, concatenation fusion") {
    SpamConfig cfg;
    cfg.channels = 8;
    cfg.codebook_size = 4;
    cfg.fuse = SpamFuse::kConcatProject;
    Spam<double> spam(cfg, rng);
    std::vector<Var<double>*> inputs{&x};
    for (const auto& p : spam.named_parameters()) inputs.push_back(p.var);
    const auto r = oracle::check_gradients([&] { return ops::weighted_sum(spam.forward(x), probe); }, inputs);
    CHECK(r.max_rel_error <= 1e-3);
  }
  SUBCASE("AFAM, split channels") {
    AfamConfig cfg;
    cfg.channels = 8;
    cfg.reduction = 2;
    cfg.split_channels = true;
    Afam<double> afam(cfg, rng);
    std::vector<Var<double>*> inputs{&x};
    for (const auto& p : afam.named_parameters()) inputs.push_back(p.var);
    const auto r = oracle::check_gradients([&] { return ops::weighted_sum(afam.forward(x), probe); }, inputs);
    CHECK(r.max_rel_error <= 1e-3);
  }
}
