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

#include "crowdpoint/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "crowdpoint/matching.hpp"

namespace crowdpoint {

CountResult counting_metrics(std::span<const std::pair<int64_t, int64_t>> scenes) {
  if (scenes.empty()) throw std::invalid_argument("counting_metrics: no scenes");
  CountResult r;
  double abs_sum = 0.0, sq_sum = 0.0;
  for (const auto& [gt, pred] : scenes) {
    const double e = static_cast<double>(pred - gt);
    abs_sum += std::abs(e);
    sq_sum += e * e;
    r.per_scene.emplace_back(gt, pred);
  }
  const double n = static_cast<double>(scenes.size());
  r.mae = abs_sum / n;
  r.mse = std::sqrt(sq_sum / n);
  return r;
}

int64_t count_true_positives(std::span<const ScoredPoint> pred, std::span<const Point> gt, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("localization: delta must be positive");
  if (pred.empty() || gt.empty()) return 0;
  const int64_t m = static_cast<int64_t>(pred.size()), n = static_cast<int64_t>(gt.size());
  // Any assignment with k feasible pairs costs at most k * delta + (s - k) * S
  // over s = min(m, n) pairs; S > (s + 1) * delta makes one more feasible pair
  // always cheaper.
  const double sentinel = (static_cast<double>(std::min(m, n)) + 1.0) * delta + 1.0;
  CostMatrix c(m, n);
  for (int64_t p = 0; p < m; ++p)
    for (int64_t g = 0; g < n; ++g) {
      const double d = std::hypot(pred[static_cast<size_t>(p)].x - gt[static_cast<size_t>(g)].x,
                                  pred[static_cast<size_t>(p)].y - gt[static_cast<size_t>(g)].y);
      c(p, g) = d <= delta ? d : sentinel;
    }
  int64_t tp = 0;
  for (const auto& [p, g] : hungarian(c).pairs) tp += c(p, g) <= delta ? 1 : 0;
  return tp;
}

LocalizationResult finalize_localization(int64_t tp, int64_t fp, int64_t fn) {
  LocalizationResult r{0.0, 0.0, 0.0, tp, fp, fn};
  if (tp + fp + fn == 0) {
    r.precision = r.recall = r.f1 = 100.0;
    return r;
  }
  r.precision = tp + fp > 0 ? 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

LocalizationResult localization_metrics(std::span<const ScoredPoint> pred, std::span<const Point> gt, double delta) {
  const int64_t tp = count_true_positives(pred, gt, delta);
  return finalize_localization(tp, static_cast<int64_t>(pred.size()) - tp, static_cast<int64_t>(gt.size()) - tp);
}

LocalizationResult aggregate_localization(std::span<const LocalizationResult> scenes) {
  int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& s : scenes) {
    tp += s.tp;
    fp += s.fp;
    fn += s.fn;
  }
  return finalize_localization(tp, fp, fn);
}

std::string metrics_json(const MetricsReport& report) {
  const auto& c = report.counting;
  const auto& l = report.localization;
  nlohmann::ordered_json j;
  j["mae"] = c.mae;
  j["rmse"] = c.mse;
  j["precision"] = l.precision;
  j["recall"] = l.recall;
  j["f1"] = l.f1;
  j["tp"] = l.tp;
  j["fp"] = l.fp;
  j["fn"] = l.fn;
  return j.dump(2) + "\n";
}

std::string metrics_text(const MetricsReport& report) {
  const auto& c = report.counting;
  const auto& l = report.localization;
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "scenes = %zu\ntau = %.6g\ndelta = %.6g\nmae = %.6f\nrmse = %.6f\nprecision = %.4f\nrecall = %.4f\n"
                "f1 = %.4f\ntp = %lld\nfp = %lld\nfn = %lld\n",
                c.per_scene.size(), report.tau, report.delta, c.mae, c.mse, l.precision, l.recall, l.f1,
                static_cast<long long>(l.tp), static_cast<long long>(l.fp), static_cast<long long>(l.fn));
  return buf;
}

}  // namespace crowdpoint
