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

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

#include "neat/image.hpp"

// Non-differentiable image operations used to build the content prior and to
// pick patches for the co-occurrence discriminators. Borders are handled by
// mirror reflection without repeating the edge sample (dcb|abcd|cba).

namespace neat::imgproc {

/// Single-channel gradient-magnitude map, same size as its source.
struct SobelMap {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  double at(int y, int x) const { return data[static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)]; }
};

struct ScoredPatch {
  Image crop;
  double score = 0.0;  // mean Sobel magnitude over the footprint
  int x = 0;           // top-left column in the source
  int y = 0;           // top-left row in the source
  int source_id = 0;
  int order = 0;       // position in sampling order
};

/// Content-prior construction parameters. Sigmas for the bilateral filter are
/// given in 0-255 units, matching the usual 8-bit parameterization.
struct PriorConfig {
  int blur_kernel = 7;
  double blur_sigma = 0.0;  // <= 0 derives 0.15 * kernel + 0.35
  int bilateral_diameter = 25;
  double bilateral_sigma = 100.0;
  double prior_weight = 0.5;
  bool blur_enabled = true;

  double effective_blur_sigma() const;
  void validate() const;
};

/// Normalized 1-D Gaussian taps of odd length `kernel`.
std::vector<double> gaussian_kernel(int kernel, double sigma);

Image gaussian_blur(const Image& img, int kernel, double sigma);

/// sigma_color is in the image's own value units ([0,1] data); sigma_space is
/// in pixels. The window is the full diameter x diameter square.
Image bilateral_filter(const Image& img, int diameter, double sigma_color, double sigma_space);

/// RGB is reduced to luminance 0.299R + 0.587G + 0.114B first.
SobelMap sobel_map(const Image& img);

Image to_luminance(const Image& img);

/// Affine color transform x -> A (x - mu_c) + mu_s matching mean and covariance.
struct ColorTransform {
  Eigen::Matrix3d matrix;
  Eigen::Vector3d content_mean;
  Eigen::Vector3d style_mean;
};

struct ColorMoments {
  Eigen::Vector3d mean;
  Eigen::Matrix3d covariance;  // population (1/N) estimator
};

ColorMoments color_moments(const Image& rgb);
ColorTransform fit_recolor(const Image& content, const Image& style, double eps = 1e-5);
Image apply_color_transform(const Image& content, const ColorTransform& t, bool clamp_output = true);
Image recolor(const Image& content, const Image& style, double eps = 1e-5);

/// Symmetric PSD square root (and inverse square root) via eigendecomposition,
/// eigenvalues clamped at zero.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m);
Eigen::MatrixXd inv_sqrtm_pd(const Eigen::MatrixXd& m);

/// Stages kept for inspection; `weighted` is what the network consumes.
struct PriorStages {
  Image blurred;      // equals the input when blur is disabled
  Image filtered;
  Image recolored;
  Image weighted;
};

PriorStages build_prior_stages(const Image& content, const Image& style, const PriorConfig& cfg);
Image build_prior(const Image& content, const Image& style, const PriorConfig& cfg);
/// Same pipeline without recoloring: the content's own faded prior.
Image build_self_prior(const Image& content, const PriorConfig& cfg);

std::vector<ScoredPatch> sample_patches(const Image& img, const SobelMap& sobel_source, int n, int patch_size,
                                        uint64_t seed, int source_id = 0);

/// Top-left positions only, for callers cropping from another representation.
std::vector<std::pair<int, int>> sample_positions(int height, int width, int n, int patch_size, uint64_t seed);
double patch_score(const SobelMap& sobel, int y, int x, int patch_size);

/// Stable ascending sort by score; lower half simple, upper half complex.
std::pair<std::vector<ScoredPatch>, std::vector<ScoredPatch>> sort_split_patches(std::vector<ScoredPatch> patches);

Image resize_bilinear(const Image& img, int height, int width);
Image resize_nearest(const Image& img, int height, int width);
Image crop(const Image& img, int y, int x, int height, int width);
Image transpose(const Image& img);

}  // namespace neat::imgproc
