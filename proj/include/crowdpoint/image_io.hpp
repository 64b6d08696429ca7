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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crowdpoint/data.hpp"
#include "crowdpoint/tensor.hpp"

namespace crowdpoint {

// Decodes any OpenCV-readable image into a 3 x H x W RGB tensor in [0, 1].
Tensor<float> load_image(const std::filesystem::path& path);

// Encodes a 3 x H x W (or 1 x H x W) tensor in [0, 1]; format from extension.
void save_image(const std::filesystem::path& path, const Tensor<float>& image);

bool is_image_file(const std::filesystem::path& path);

// Marker and label colors of the overlay, RGB.
constexpr unsigned char kMarkerColor[3] = {255, 0, 0};
constexpr unsigned char kLabelColor[3] = {255, 255, 255};
constexpr int kMarkerRadius = 2;

// Draws a filled marker per point and the count in the top-left corner.
Tensor<float> render_overlay(const Tensor<float>& image, std::span<const ScoredPoint> points);

}  // namespace crowdpoint
