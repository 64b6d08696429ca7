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

#include "crowdpoint/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "crowdpoint/image_io.hpp"

namespace crowdpoint {

namespace fs = std::filesystem;

void AugmentConfig::validate() const {
  if (crop_size <= 0 || crop_size % 32 != 0) {
    throw std::invalid_argument("crop_size must be a positive multiple of 32, got " + std::to_string(crop_size));
  }
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw std::invalid_argument("flip_probability must lie in [0, 1]");
  }
}

void validate_scene(const Scene& scene) {
  const double w = static_cast<double>(scene.width());
  const double h = static_cast<double>(scene.height());
  for (const Point& p : scene.points) {
    if (!(p.x >= 0.0 && p.x < w && p.y >= 0.0 && p.y < h)) {
      std::ostringstream os;
      os << "scene '" << scene.id << "': point (" << p.x << ", " << p.y << ") outside " << scene.width() << "x"
         << scene.height() << " image";
      throw std::invalid_argument(os.str());
    }
  }
}

std::vector<Point> parse_annotation_json(const std::string& text, const std::string& source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(source + ": invalid JSON: " + e.what());
  }
  if (!doc.is_array()) throw std::runtime_error(source + ": expected a JSON array of [x, y] pairs");
  std::vector<Point> points;
  points.reserve(doc.size());
  for (const auto& item : doc) {
    if (!item.is_array() || item.size() != 2 || !item[0].is_number() || !item[1].is_number()) {
      throw std::runtime_error(source + ": entry " + item.dump() + " is not an [x, y] pair");
    }
    points.push_back({item[0].get<double>(), item[1].get<double>()});
  }
  return points;
}

std::vector<Scene> load_annotations(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("dataset directory not found: " + root.string());
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) images.push_back(entry.path());
  }
  std::vector<Scene> scenes;
  scenes.reserve(images.size());
  for (const fs::path& image_path : images) {
    fs::path sidecar = image_path;
    sidecar.replace_extension(".json");
    std::ifstream in(sidecar);
    if (!in) {
      throw std::runtime_error("missing annotation sidecar " + sidecar.filename().string() + " for image " +
                               image_path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    Scene scene;
    scene.id = image_path.stem().string();
    scene.image = load_image(image_path);
    scene.points = parse_annotation_json(buf.str(), sidecar.string());
    validate_scene(scene);
    scenes.push_back(std::move(scene));
  }
  std::sort(scenes.begin(), scenes.end(), [](const Scene& a, const Scene& b) { return a.id < b.id; });
  return scenes;
}

Scene crop_scene(const Scene& scene, int64_t origin_x, int64_t origin_y, int64_t size) {
  const int64_t c = scene.channels(), h = scene.height(), w = scene.width();
  if (size <= 0 || size > std::min(h, w)) {
    throw std::invalid_argument("crop size " + std::to_string(size) + " exceeds image " + std::to_string(w) + "x" +
                                std::to_string(h));
  }
  if (origin_x < 0 || origin_y < 0 || origin_x + size > w || origin_y + size > h) {
    throw std::invalid_argument("crop window outside image");
  }
  Scene out;
  out.id = scene.id;
  out.image = Tensor<float>({c, size, size});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < size; ++i) {
      const float* src = scene.image.data() + (ch * h + origin_y + i) * w + origin_x;
      std::copy(src, src + size, out.image.data() + (ch * size + i) * size);
    }
  const double ox = static_cast<double>(origin_x), oy = static_cast<double>(origin_y);
  const double lim = static_cast<double>(size);
  for (const Point& p : scene.points) {
    const Point q{p.x - ox, p.y - oy};
    if (q.x >= 0.0 && q.x < lim && q.y >= 0.0 && q.y < lim) out.points.push_back(q);
  }
  return out;
}

Scene flip_scene(const Scene& scene) {
  const int64_t c = scene.channels(), h = scene.height(), w = scene.width();
  Scene out;
  out.id = scene.id;
  out.image = Tensor<float>(scene.image.shape());
  for (int64_t r = 0; r < c * h; ++r) {
    const float* src = scene.image.data() + r * w;
    float* dst = out.image.data() + r * w;
    for (int64_t j = 0; j < w; ++j) dst[j] = src[w - 1 - j];
  }
  out.points.reserve(scene.points.size());
  // Annotations in the last half-open pixel column (x > W - 1) clamp to 0.
  for (const Point& p : scene.points) out.points.push_back({std::max(0.0, static_cast<double>(w - 1) - p.x), p.y});
  return out;
}

Scene random_crop(const Scene& scene, const AugmentConfig& cfg, std::mt19937_64& rng) {
  const int64_t size = cfg.crop_size;
  if (size > std::min(scene.height(), scene.width())) {
    throw std::invalid_argument("crop_size " + std::to_string(size) + " exceeds min(H, W) of scene '" + scene.id +
                                "'");
  }
  std::uniform_int_distribution<int64_t> dx(0, scene.width() - size);
  std::uniform_int_distribution<int64_t> dy(0, scene.height() - size);
  const int64_t ox = dx(rng);
  const int64_t oy = dy(rng);
  return crop_scene(scene, ox, oy, size);
}

Scene random_flip(const Scene& scene, const AugmentConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < cfg.flip_probability) return flip_scene(scene);
  return scene;
}

std::vector<Scene> synth_scenes(int count, std::pair<int, int> density, int size, uint64_t seed) {
  if (count <= 0) throw std::invalid_argument("synth_scenes: count must be positive");
  if (size <= 0 || size % 32 != 0) throw std::invalid_argument("synth_scenes: size must be a positive multiple of 32");
  if (density.first < 0 || density.second < density.first) {
    throw std::invalid_argument("synth_scenes: invalid density range");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> n_dist(density.first, density.second);
  // Pixel-index convention: points stay in [0, size - 1] so a flip keeps them on the image.
  std::uniform_real_distribution<double> pos(0.0, static_cast<double>(size - 1));
  const double sigma = kSynthBlobSigma;
  const auto radius = static_cast<int64_t>(std::ceil(4 * sigma));
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<size_t>(count));
  for (int s = 0; s < count; ++s) {
    Scene scene;
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%04d", s);
    scene.id = id;
    const int n = n_dist(rng);
    for (int i = 0; i < n; ++i) {
      const double x = pos(rng);
      const double y = pos(rng);
      scene.points.push_back({x, y});
    }
    Tensor<float> blob({size, size});
    for (const Point& p : scene.points) {
      const auto cx = static_cast<int64_t>(std::floor(p.x)), cy = static_cast<int64_t>(std::floor(p.y));
      for (int64_t r = std::max<int64_t>(0, cy - radius); r <= std::min<int64_t>(size - 1, cy + radius); ++r)
        for (int64_t c = std::max<int64_t>(0, cx - radius); c <= std::min<int64_t>(size - 1, cx + radius); ++c) {
          const double dx = static_cast<double>(c) - p.x, dy = static_cast<double>(r) - p.y;
          blob[r * size + c] += static_cast<float>(std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)));
        }
    }
    scene.image = Tensor<float>({3, size, size});
    for (int64_t ch = 0; ch < 3; ++ch)
      for (int64_t i = 0; i < static_cast<int64_t>(size) * size; ++i) {
        scene.image[ch * size * size + i] = std::min(1.0f, kSynthBackground + kSynthBlobAmplitude * blob[i]);
      }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace crowdpoint
