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
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "crowdpoint/tensor.hpp"

namespace crowdpoint {

// Pixel coordinates, origin top-left, x rightward, y downward.
struct Point {
  double x = 0;
  double y = 0;
  bool operator==(const Point&) const = default;
};

// A predicted point with its confidence in (0, 1).
struct ScoredPoint {
  double x = 0;
  double y = 0;
  double score = 0;
};

// A point-annotated image. `image` is C x H x W with values in [0, 1] and
// every point satisfies 0 <= x < W, 0 <= y < H.
struct Scene {
  Tensor<float> image;
  std::vector<Point> points;
  std::string id;

  int64_t channels() const { return image.dim(0); }
  int64_t height() const { return image.dim(1); }
  int64_t width() const { return image.dim(2); }
  bool operator==(const Scene&) const = default;
};

struct AugmentConfig {
  int crop_size = 128;
  double flip_probability = 0.5;
  uint64_t seed = 0;

  // Throws std::invalid_argument unless crop_size > 0, crop_size % 32 == 0
  // and flip_probability lies in [0, 1].
  void validate() const;
};

// Throws std::invalid_argument when some point lies outside the image.
void validate_scene(const Scene& scene);

// Reads every image under `root` together with its `<stem>.json` sidecar
// holding a JSON array of [x, y] pairs. Scenes are sorted by id (the stem).
std::vector<Scene> load_annotations(const std::filesystem::path& root);

// Parses sidecar text; `source` names the file in error messages.
std::vector<Point> parse_annotation_json(const std::string& text, const std::string& source);

Scene crop_scene(const Scene& scene, int64_t origin_x, int64_t origin_y, int64_t size);
Scene flip_scene(const Scene& scene);

Scene random_crop(const Scene& scene, const AugmentConfig& cfg, std::mt19937_64& rng);
Scene random_flip(const Scene& scene, const AugmentConfig& cfg, std::mt19937_64& rng);

// Constant background plus a sigma = 2 px Gaussian blob per point. The point
// count of each scene is uniform in [density.first, density.second].
std::vector<Scene> synth_scenes(int count, std::pair<int, int> density, int size, uint64_t seed);

constexpr double kSynthBlobSigma = 2.0;
constexpr float kSynthBackground = 0.2f;
constexpr float kSynthBlobAmplitude = 0.8f;

}  // namespace crowdpoint
