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

// Independent reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "crowdpoint/autograd.hpp"
#include "crowdpoint/data.hpp"
#include "crowdpoint/matching.hpp"

namespace oracle {

using crowdpoint::CostMatrix;

struct BruteAssignment {
  std::vector<std::pair<int64_t, int64_t>> pairs;  // sorted by proposal
  double total = std::numeric_limits<double>::infinity();
};

// Enumerates every injection of the smaller side into the larger one. Totals
// are summed in proposal order; among equal totals the lexicographically
// smallest sorted pair list wins.
inline BruteAssignment brute_force_assignment(const CostMatrix& c) {
  BruteAssignment best;
  const bool rows_small = c.rows <= c.cols;
  const int64_t n = rows_small ? c.rows : c.cols;
  const int64_t m = rows_small ? c.cols : c.rows;
  if (n == 0) {
    best.total = 0.0;
    return best;
  }
  std::vector<int64_t> perm(static_cast<size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  // Every permutation of the larger side; the first n entries give the image.
  do {
    std::vector<std::pair<int64_t, int64_t>> pairs;
    for (int64_t i = 0; i < n; ++i) {
      const int64_t j = perm[static_cast<size_t>(i)];
      pairs.emplace_back(rows_small ? i : j, rows_small ? j : i);
    }
    std::sort(pairs.begin(), pairs.end());
    double total = 0.0;
    for (const auto& [p, g] : pairs) total += c(p, g);
    if (total < best.total || (total == best.total && pairs < best.pairs)) {
      best.total = total;
      best.pairs = std::move(pairs);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Maximum number of disjoint (prediction, gt) pairs within delta, by
// exhaustive search over subsets of predictions.
inline int64_t brute_force_max_feasible(const std::vector<crowdpoint::ScoredPoint>& pred,
                                        const std::vector<crowdpoint::Point>& gt, double delta) {
  const size_t m = pred.size(), n = gt.size();
  std::function<int64_t(size_t, uint32_t)> best = [&](size_t p, uint32_t used) -> int64_t {
    if (p == m) return 0;
    int64_t r = best(p + 1, used);  // leave prediction p unmatched
    for (size_t g = 0; g < n; ++g) {
      if (used & (1u << g)) continue;
      if (std::hypot(pred[p].x - gt[g].x, pred[p].y - gt[g].y) <= delta) {
        r = std::max(r, 1 + best(p + 1, used | (1u << g)));
      }
    }
    return r;
  };
  return best(0, 0);
}

// Norm-wise relative error between analytic gradients (from one backward
// pass of `loss`) and central differences for every input tensor. The
// denominator is floored at `floor` so tensors whose true gradient is zero
// (both sides at rounding noise) are compared absolutely.
struct GradCheck {
  double max_rel_error = 0.0;
  size_t tensors = 0;
  size_t elements = 0;
};

inline GradCheck check_gradients(const std::function<crowdpoint::Var<double>()>& loss,
                                 const std::vector<crowdpoint::Var<double>*>& inputs, double h = 1e-6,
                                 double floor = 1e-4) {
  for (auto* v : inputs) v->zero_grad();
  crowdpoint::Var<double> l = loss();
  l.backward();
  GradCheck out;
  for (auto* v : inputs) {
    const int64_t n = v->value().numel();
    std::vector<double> analytic(static_cast<size_t>(n), 0.0), numeric(static_cast<size_t>(n));
    if (v->has_grad())
      for (int64_t i = 0; i < n; ++i) analytic[static_cast<size_t>(i)] = v->grad()[i];
    for (int64_t i = 0; i < n; ++i) {
      double& x = v->mutable_value()[i];
      const double x0 = x;
      x = x0 + h;
      const double fp = loss().value()[0];
      x = x0 - h;
      const double fm = loss().value()[0];
      x = x0;
      numeric[static_cast<size_t>(i)] = (fp - fm) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double a = analytic[static_cast<size_t>(i)], b = numeric[static_cast<size_t>(i)];
      diff += (a - b) * (a - b);
      na += a * a;
      nn += b * b;
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), floor});
    out.max_rel_error = std::max(out.max_rel_error, std::sqrt(diff) / denom);
    ++out.tensors;
    out.elements += static_cast<size_t>(n);
  }
  return out;
}

template <typename T>
crowdpoint::Tensor<T> random_tensor(crowdpoint::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  crowdpoint::Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(u(rng));
  return t;
}

}  // namespace oracle
