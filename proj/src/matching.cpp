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

#include "crowdpoint/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace crowdpoint {

CostMatrix::CostMatrix(std::initializer_list<std::initializer_list<double>> values)
    : rows(static_cast<int64_t>(values.size())), cols(values.size() ? static_cast<int64_t>(values.begin()->size()) : 0) {
  for (const auto& row : values) {
    if (static_cast<int64_t>(row.size()) != cols) throw std::invalid_argument("CostMatrix: ragged rows");
    costs.insert(costs.end(), row.begin(), row.end());
  }
}

void LossWeights::validate() const {
  if (!(w_loc >= 0.0)) throw std::invalid_argument("loss.w_loc must be >= 0");
  if (!(w_cost_loc >= 0.0)) throw std::invalid_argument("loss.w_cost_loc must be >= 0");
}

CostMatrix build_cost(std::span<const ScoredPoint> proposals, std::span<const Point> gts, const LossWeights& w) {
  if (proposals.empty() || gts.empty()) {
    throw std::invalid_argument("build_cost: needs at least one proposal and one ground-truth point (got " +
                                std::to_string(proposals.size()) + " and " + std::to_string(gts.size()) + ")");
  }
  CostMatrix c(static_cast<int64_t>(proposals.size()), static_cast<int64_t>(gts.size()));
  for (size_t p = 0; p < proposals.size(); ++p) {
    const double s = w.cost_uses_score ? proposals[p].score : 0.0;
    for (size_t g = 0; g < gts.size(); ++g) {
      const double d = std::hypot(proposals[p].x - gts[g].x, proposals[p].y - gts[g].y);
      c(static_cast<int64_t>(p), static_cast<int64_t>(g)) = w.w_cost_loc * d - s;
    }
  }
  return c;
}

namespace {

// Shortest augmenting path Hungarian with potentials on an n x m matrix,
// n <= m. On return row_of[j] is the row matched to column j (or -1) and
// u, v are feasible duals: a[i][j] - u[i] - v[j] >= 0, v[j] <= 0, and
// v[j] == 0 for unmatched columns.
struct Solved {
  std::vector<int64_t> row_of;
  std::vector<double> u, v;
};

Solved solve(const std::vector<double>& a, int64_t n, int64_t m) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n + 1), 0.0), v(static_cast<size_t>(m + 1), 0.0);
  std::vector<int64_t> p(static_cast<size_t>(m + 1), 0), way(static_cast<size_t>(m + 1), 0);
  std::vector<double> minv(static_cast<size_t>(m + 1));
  std::vector<char> used(static_cast<size_t>(m + 1));
  for (int64_t i = 1; i <= n; ++i) {
    p[0] = i;
    int64_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int64_t i0 = p[static_cast<size_t>(j0)];
      double delta = kInf;
      int64_t j1 = 0;
      const double* row = a.data() + (i0 - 1) * m;
      for (int64_t j = 1; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = row[j - 1] - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int64_t j = 0; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int64_t j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  Solved s;
  s.row_of.assign(static_cast<size_t>(m), -1);
  for (int64_t j = 1; j <= m; ++j) s.row_of[static_cast<size_t>(j - 1)] = p[static_cast<size_t>(j)] - 1;
  s.u.assign(u.begin() + 1, u.end());
  s.v.assign(v.begin() + 1, v.end());
  return s;
}

// Bipartite graph of tight edges with vertices removable during the
// lexicographic search. Rows must all be matched; columns flagged `must`
// (nonzero dual) must be matched as well.
class TightGraph {
 public:
  TightGraph(int64_t n, int64_t m) : n_(n), m_(m), row_adj_(static_cast<size_t>(n)), col_adj_(static_cast<size_t>(m)),
                                     row_alive_(static_cast<size_t>(n), 1), col_alive_(static_cast<size_t>(m), 1),
                                     must_(static_cast<size_t>(m), 0) {}

  void add_edge(int64_t i, int64_t j) {
    row_adj_[static_cast<size_t>(i)].push_back(j);
    col_adj_[static_cast<size_t>(j)].push_back(i);
  }
  void set_must(int64_t j) { must_[static_cast<size_t>(j)] = 1; }
  bool must(int64_t j) const { return must_[static_cast<size_t>(j)] != 0; }
  const std::vector<int64_t>& row_adj(int64_t i) const { return row_adj_[static_cast<size_t>(i)]; }
  const std::vector<int64_t>& col_adj(int64_t j) const { return col_adj_[static_cast<size_t>(j)]; }
  bool row_alive(int64_t i) const { return row_alive_[static_cast<size_t>(i)] != 0; }
  bool col_alive(int64_t j) const { return col_alive_[static_cast<size_t>(j)] != 0; }
  void set_row(int64_t i, bool alive) { row_alive_[static_cast<size_t>(i)] = alive; }
  void set_col(int64_t j, bool alive) { col_alive_[static_cast<size_t>(j)] = alive; }

  // A matching covering all live rows and one covering all live must columns
  // exist, hence (Mendelsohn-Dulmage) one covering both.
  bool feasible() const {
    return covers(n_, m_, row_adj_, row_alive_, col_alive_, nullptr) &&
           covers(m_, n_, col_adj_, col_alive_, row_alive_, &must_);
  }

 private:
  static bool covers(int64_t ns, int64_t nt, const std::vector<std::vector<int64_t>>& adj,
                     const std::vector<char>& src_alive, const std::vector<char>& dst_alive,
                     const std::vector<char>* only) {
    std::vector<int64_t> match(static_cast<size_t>(nt), -1);
    std::vector<int64_t> seen(static_cast<size_t>(nt), -1);
    for (int64_t s = 0; s < ns; ++s) {
      if (!src_alive[static_cast<size_t>(s)] || (only && !(*only)[static_cast<size_t>(s)])) continue;
      if (!augment(s, s, adj, dst_alive, match, seen)) return false;
    }
    return true;
  }
  static bool augment(int64_t s, int64_t stamp, const std::vector<std::vector<int64_t>>& adj,
                      const std::vector<char>& dst_alive, std::vector<int64_t>& match, std::vector<int64_t>& seen) {
    for (int64_t t : adj[static_cast<size_t>(s)]) {
      if (!dst_alive[static_cast<size_t>(t)] || seen[static_cast<size_t>(t)] == stamp) continue;
      seen[static_cast<size_t>(t)] = stamp;
      if (match[static_cast<size_t>(t)] < 0 || augment(match[static_cast<size_t>(t)], stamp, adj, dst_alive, match, seen)) {
        match[static_cast<size_t>(t)] = s;
        return true;
      }
    }
    return false;
  }

  int64_t n_, m_;
  std::vector<std::vector<int64_t>> row_adj_, col_adj_;
  std::vector<char> row_alive_, col_alive_, must_;
};

double total_in_proposal_order(const CostMatrix& c, const std::vector<std::pair<int64_t, int64_t>>& pairs) {
  double total = 0.0;
  for (const auto& [p, g] : pairs) total += c(p, g);
  return total;
}

}  // namespace

Assignment hungarian(const CostMatrix& c) {
  if (c.rows < 0 || c.cols < 0 || static_cast<int64_t>(c.costs.size()) != c.rows * c.cols) {
    throw std::invalid_argument("hungarian: cost storage does not match its shape");
  }
  double scale = 1.0;
  for (double x : c.costs) {
    if (!std::isfinite(x)) throw std::invalid_argument("hungarian: cost matrix has a non-finite entry");
    scale = std::max(scale, std::abs(x));
  }
  Assignment out;
  if (c.rows == 0 || c.cols == 0) return out;

  // Internal rows are the smaller side.
  const bool transposed = c.rows > c.cols;
  const int64_t n = transposed ? c.cols : c.rows;
  const int64_t m = transposed ? c.rows : c.cols;
  std::vector<double> a(static_cast<size_t>(n * m));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) a[static_cast<size_t>(i * m + j)] = transposed ? c(j, i) : c(i, j);

  const Solved s = solve(a, n, m);
  const auto to_pairs = [&](const std::vector<int64_t>& row_of) {
    std::vector<std::pair<int64_t, int64_t>> pairs;
    for (int64_t j = 0; j < m; ++j) {
      const int64_t i = row_of[static_cast<size_t>(j)];
      if (i >= 0) pairs.emplace_back(transposed ? j : i, transposed ? i : j);
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
  };
  out.pairs = to_pairs(s.row_of);
  out.total_cost = total_in_proposal_order(c, out.pairs);

  // Tight-edge graph: every optimal assignment uses only tight edges and
  // matches every column with a nonzero dual.
  const double tol = 1e-12 * scale * static_cast<double>(n + m);
  TightGraph graph(n, m);
  int64_t tight = 0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) {
      if (a[static_cast<size_t>(i * m + j)] - s.u[static_cast<size_t>(i)] - s.v[static_cast<size_t>(j)] <= tol) {
        graph.add_edge(i, j);
        ++tight;
      }
    }
  if (tight == n) return out;  // the optimum is unique
  for (int64_t j = 0; j < m; ++j)
    if (s.v[static_cast<size_t>(j)] < -tol) graph.set_must(j);

  // Greedy lexicographic search over proposals in ascending order.
  std::vector<int64_t> row_of(static_cast<size_t>(m), -1);
  if (!transposed) {
    for (int64_t i = 0; i < n; ++i) {
      graph.set_row(i, false);
      bool placed = false;
      for (int64_t j : graph.row_adj(i)) {  // ascending by construction
        if (!graph.col_alive(j)) continue;
        graph.set_col(j, false);
        if (graph.feasible()) {
          row_of[static_cast<size_t>(j)] = i;
          placed = true;
          break;
        }
        graph.set_col(j, true);
      }
      if (!placed) return out;  // tolerance artefact; keep the solver's optimum
    }
  } else {
    for (int64_t j = 0; j < m; ++j) {
      graph.set_col(j, false);
      bool placed = false;
      for (int64_t i : graph.col_adj(j)) {
        if (!graph.row_alive(i)) continue;
        graph.set_row(i, false);
        if (graph.feasible()) {
          row_of[static_cast<size_t>(j)] = i;
          placed = true;
          break;
        }
        graph.set_row(i, true);
      }
      if (!placed && (graph.must(j) || !graph.feasible())) return out;
    }
  }
  auto pairs = to_pairs(row_of);
  if (static_cast<int64_t>(pairs.size()) != n) return out;
  const double total = total_in_proposal_order(c, pairs);
  if (total <= out.total_cost) {
    out.pairs = std::move(pairs);
    out.total_cost = total;
  }
  return out;
}

}  // namespace crowdpoint
