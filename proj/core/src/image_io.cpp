/*
 * Copyright 2026 The neat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "neat/image.hpp"

namespace neat {

Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ImageIoError("no such image file: " + path.string());
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ImageIoError("cannot decode image: " + path.string());
  if (bgr.depth() != CV_8U) bgr.convertTo(bgr, CV_8U);
  Image img(3, bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(0, y, x) = row[x][2] / 255.0;
      img.at(1, y, x) = row[x][1] / 255.0;
      img.at(2, y, x) = row[x][0] / 255.0;
    }
  }
  return img;
}

void save_image(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3) {
    throw ImageIoError("can only save 1- or 3-channel images, got " + std::to_string(img.channels));
  }
  auto to_byte = [](double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0) * 255.0));
  };
  cv::Mat out(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.height; ++y) {
    auto* row = out.ptr<uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 3) {
        row[3 * x + 0] = to_byte(img.at(2, y, x));
        row[3 * x + 1] = to_byte(img.at(1, y, x));
        row[3 * x + 2] = to_byte(img.at(0, y, x));
      } else {
        row[x] = to_byte(img.at(0, y, x));
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), out);
  } catch (const cv::Exception& e) {
    throw ImageIoError("cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw ImageIoError("cannot write image " + path.string());
}

}  // namespace neat
