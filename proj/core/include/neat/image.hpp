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

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "neat/diff.hpp"

namespace neat {

/// Channel-major C x H x W raster of reals, nominally in [0,1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0);

  size_t index(int c, int y, int x) const {
    return (static_cast<size_t>(c) * static_cast<size_t>(height) + static_cast<size_t>(y)) *
               static_cast<size_t>(width) +
           static_cast<size_t>(x);
  }
  double& at(int c, int y, int x) { return data[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data[index(c, y, x)]; }
  size_t pixels() const { return static_cast<size_t>(height) * static_cast<size_t>(width); }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Raises std::invalid_argument unless every value is finite and the image
/// is at least min_side on both axes.
void validate_image(const Image& img, const char* what, int min_side = 1);

diff::Tensor to_tensor(const Image& img, bool requires_grad = false);
Image from_tensor(const diff::Tensor& t);

/// Error raised for unreadable or undecodable image files.
class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads an 8-bit PNG/JPEG into RGB [0,1] (value / 255).
Image load_image(const std::filesystem::path& path);
/// Writes round(clamp(v) * 255) as 8-bit RGB (or grayscale for 1 channel).
void save_image(const Image& img, const std::filesystem::path& path);

}  // namespace neat
