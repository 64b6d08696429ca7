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

#include "crowdpoint/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crowdpoint {

namespace {

cv::Mat to_bgr8(const Tensor<float>& image) {
  if (image.rank() != 3 || (image.dim(0) != 3 && image.dim(0) != 1)) {
    throw std::invalid_argument("expected a 3 x H x W or 1 x H x W image, got " + shape_str(image.shape()));
  }
  const int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  cv::Mat out(static_cast<int>(h), static_cast<int>(w), CV_8UC3);
  for (int64_t i = 0; i < h; ++i) {
    auto* row = out.ptr<cv::Vec3b>(static_cast<int>(i));
    for (int64_t j = 0; j < w; ++j) {
      for (int64_t ch = 0; ch < 3; ++ch) {
        const float v = image[((c == 3 ? ch : 0) * h + i) * w + j];
        const auto q = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
        row[j][static_cast<int>(2 - ch)] = q;
      }
    }
  }
  return out;
}

Tensor<float> from_bgr8(const cv::Mat& bgr) {
  const int64_t h = bgr.rows, w = bgr.cols;
  Tensor<float> out({3, h, w});
  for (int64_t i = 0; i < h; ++i) {
    const auto* row = bgr.ptr<cv::Vec3b>(static_cast<int>(i));
    for (int64_t j = 0; j < w; ++j)
      for (int64_t ch = 0; ch < 3; ++ch) out[(ch * h + i) * w + j] = row[j][static_cast<int>(2 - ch)] / 255.0f;
  }
  return out;
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm" || ext == ".pgm" ||
         ext == ".tif" || ext == ".tiff";
}

Tensor<float> load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot read image " + path.string());
  return from_bgr8(bgr);
}

void save_image(const std::filesystem::path& path, const Tensor<float>& image) {
  const cv::Mat bgr = to_bgr8(image);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr);
  } catch (const cv::Exception& e) {
    throw std::runtime_error("cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw std::runtime_error("cannot write image " + path.string());
}

Tensor<float> render_overlay(const Tensor<float>& image, std::span<const ScoredPoint> points) {
  cv::Mat canvas = to_bgr8(image);
  const cv::Scalar marker(kMarkerColor[2], kMarkerColor[1], kMarkerColor[0]);
  const cv::Scalar label(kLabelColor[2], kLabelColor[1], kLabelColor[0]);
  for (const ScoredPoint& p : points) {
    const cv::Point center(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)));
    cv::circle(canvas, center, kMarkerRadius, marker, cv::FILLED, cv::LINE_8);
  }
  const std::string text = std::to_string(points.size());
  const double font_scale = std::max(0.4, canvas.rows / 256.0);
  int baseline = 0;
  const cv::Size extent = cv::getTextSize(text, cv::FONT_HERSHEY_SIMPLEX, font_scale, 1, &baseline);
  cv::putText(canvas, text, cv::Point(2, 2 + extent.height), cv::FONT_HERSHEY_SIMPLEX, font_scale, label, 1,
              cv::LINE_8);
  return from_bgr8(canvas);
}

}  // namespace crowdpoint
