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
#include <string>
#include <utility>
#include <vector>

#include "crowdpoint/data.hpp"

namespace crowdpoint {

struct CountResult {
  double mae = 0.0;
  // Root-mean-squared count error, reported as "mse" by convention.
  double mse = 0.0;
  std::vector<std::pair<int64_t, int64_t>> per_scene;  // (gt, predicted)
};

// Throws std::invalid_argument on an empty list.
CountResult counting_metrics(std::span<const std::pair<int64_t, int64_t>> scenes);

struct LocalizationResult {
  double precision = 0.0;  // percent
  double recall = 0.0;
  double f1 = 0.0;
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
};

constexpr double kDefaultDelta = 4.0;

// Matched pairs within delta pixels after a distance-minimizing assignment in
// which pairs farther than delta cost a sentinel, so the count of feasible
// pairs is maximal.
int64_t count_true_positives(std::span<const ScoredPoint> pred, std::span<const Point> gt, double delta);

LocalizationResult localization_metrics(std::span<const ScoredPoint> pred, std::span<const Point> gt,
                                        double delta = kDefaultDelta);

// Sums TP/FP/FN over scenes, then computes the ratios.
LocalizationResult aggregate_localization(std::span<const LocalizationResult> scenes);
LocalizationResult finalize_localization(int64_t tp, int64_t fp, int64_t fn);

struct MetricsReport {
  CountResult counting;
  LocalizationResult localization;
  double delta = kDefaultDelta;
  double tau = 0.5;
};

// {"mae", "rmse", "precision", "recall", "f1", "tp", "fp", "fn"}.
std::string metrics_json(const MetricsReport& report);
// One "key = value" line per metric plus tau, delta and scene count.
std::string metrics_text(const MetricsReport& report);

}  // namespace crowdpoint
