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

#include "neat/image.hpp"

#include <algorithm>
#include <cmath>

namespace neat {

Image::Image(int c, int h, int w, double fill)
    : channels(c), height(h), width(w), data(static_cast<size_t>(c) * static_cast<size_t>(h) * static_cast<size_t>(w), fill) {
  if (c <= 0 || h <= 0 || w <= 0) {
    throw std::invalid_argument("image dimensions must be positive, got " + std::to_string(c) + "x" +
                                std::to_string(h) + "x" + std::to_string(w));
  }
}

void validate_image(const Image& img, const char* what, int min_side) {
  if (img.channels <= 0 || img.height < min_side || img.width < min_side) {
    throw std::invalid_argument(std::string(what) + ": image " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) + " smaller than " + std::to_string(min_side));
  }
  if (img.data.size() != static_cast<size_t>(img.channels) * img.pixels()) {
    throw std::invalid_argument(std::string(what) + ": image buffer size does not match its shape");
  }
  if (!std::all_of(img.data.begin(), img.data.end(), [](double v) { return std::isfinite(v); })) {
    throw std::invalid_argument(std::string(what) + ": image contains non-finite values");
  }
}

diff::Tensor to_tensor(const Image& img, bool requires_grad) {
  return diff::Tensor::from_data({img.channels, img.height, img.width}, img.data, requires_grad);
}

Image from_tensor(const diff::Tensor& t) {
  if (t.rank() != 3) throw std::invalid_argument("from_tensor: expected [C,H,W], got " + diff::shape_str(t.shape()));
  Image img;
  img.channels = static_cast<int>(t.dim(0));
  img.height = static_cast<int>(t.dim(1));
  img.width = static_cast<int>(t.dim(2));
  img.data.assign(t.data().begin(), t.data().end());
  return img;
}

}  // namespace neat
