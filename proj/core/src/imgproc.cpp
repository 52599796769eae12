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

#include "neat/imgproc.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>

namespace neat::imgproc {

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

void require_odd(const char* op, const char* what, int v) {
  if (v < 1 || v % 2 == 0) {
    throw std::invalid_argument(std::string(op) + ": " + what + " must be odd and >= 1, got " + std::to_string(v));
  }
}

void require_rgb(const char* op, const Image& img) {
  validate_image(img, op);
  if (img.channels != 3) throw std::invalid_argument(std::string(op) + ": expected an RGB image");
}

}  // namespace

// ---------------------------------------------------------------------------
// Filtering

double PriorConfig::effective_blur_sigma() const {
  return blur_sigma > 0.0 ? blur_sigma : 0.15 * blur_kernel + 0.35;
}

void PriorConfig::validate() const {
  require_odd("PriorConfig", "blur_kernel", blur_kernel);
  require_odd("PriorConfig", "bilateral_diameter", bilateral_diameter);
  if (!(bilateral_sigma > 0.0)) throw std::invalid_argument("PriorConfig: bilateral_sigma must be positive");
  if (!(prior_weight > 0.0 && prior_weight <= 1.0)) {
    throw std::invalid_argument("PriorConfig: prior_weight must lie in (0, 1]");
  }
}

std::vector<double> gaussian_kernel(int kernel, double sigma) {
  require_odd("gaussian_blur", "kernel", kernel);
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
  const int r = kernel / 2;
  std::vector<double> taps(static_cast<size_t>(kernel));
  double s = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    taps[static_cast<size_t>(i + r)] = v;
    s += v;
  }
  for (double& t : taps) t /= s;
  return taps;
}

Image gaussian_blur(const Image& img, int kernel, double sigma) {
  const auto taps = gaussian_kernel(kernel, sigma);
  validate_image(img, "gaussian_blur");
  const int r = kernel / 2;
  Image tmp(img.channels, img.height, img.width);
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double s = 0.0;
        for (int k = -r; k <= r; ++k) s += taps[static_cast<size_t>(k + r)] * img.at(c, y, reflect(x + k, img.width));
        tmp.at(c, y, x) = s;
      }
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double s = 0.0;
        for (int k = -r; k <= r; ++k) s += taps[static_cast<size_t>(k + r)] * tmp.at(c, reflect(y + k, img.height), x);
        out.at(c, y, x) = s;
      }
  }
  return out;
}

Image bilateral_filter(const Image& img, int diameter, double sigma_color, double sigma_space) {
  require_odd("bilateral_filter", "diameter", diameter);
  if (!(sigma_color > 0.0) || !(sigma_space > 0.0)) {
    throw std::invalid_argument("bilateral_filter: sigmas must be positive");
  }
  validate_image(img, "bilateral_filter");
  const int r = diameter / 2;
  std::vector<double> spatial(static_cast<size_t>(diameter * diameter));
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      spatial[static_cast<size_t>((dy + r) * diameter + dx + r)] =
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_space * sigma_space));
  const double range_k = -1.0 / (2.0 * sigma_color * sigma_color);

  // Reflected coordinates are precomputed per axis.
  std::vector<int> ys(static_cast<size_t>(img.height + 2 * r)), xs(static_cast<size_t>(img.width + 2 * r));
  for (int i = 0; i < img.height + 2 * r; ++i) ys[static_cast<size_t>(i)] = reflect(i - r, img.height);
  for (int i = 0; i < img.width + 2 * r; ++i) xs[static_cast<size_t>(i)] = reflect(i - r, img.width);

  const int nc = img.channels;
  Image out(nc, img.height, img.width);
  std::vector<double> acc(static_cast<size_t>(nc));
  std::vector<double> center(static_cast<size_t>(nc));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < nc; ++c) center[static_cast<size_t>(c)] = img.at(c, y, x);
      std::fill(acc.begin(), acc.end(), 0.0);
      double wsum = 0.0;
      for (int dy = 0; dy < diameter; ++dy) {
        const int sy = ys[static_cast<size_t>(y + dy)];
        for (int dx = 0; dx < diameter; ++dx) {
          const int sx = xs[static_cast<size_t>(x + dx)];
          double d2 = 0.0;
          for (int c = 0; c < nc; ++c) {
            const double d = img.at(c, sy, sx) - center[static_cast<size_t>(c)];
            d2 += d * d;
          }
          const double w = spatial[static_cast<size_t>(dy * diameter + dx)] * std::exp(d2 * range_k);
          wsum += w;
          for (int c = 0; c < nc; ++c) acc[static_cast<size_t>(c)] += w * img.at(c, sy, sx);
        }
      }
      for (int c = 0; c < nc; ++c) out.at(c, y, x) = acc[static_cast<size_t>(c)] / wsum;
    }
  }
  return out;
}

Image to_luminance(const Image& img) {
  validate_image(img, "to_luminance");
  if (img.channels == 1) return img;
  if (img.channels != 3) throw std::invalid_argument("to_luminance: expected 1 or 3 channels");
  Image out(1, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(0, y, x) = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
  return out;
}

SobelMap sobel_map(const Image& img) {
  const Image lum = to_luminance(img);
  const int h = lum.height, w = lum.width;
  auto p = [&](int y, int x) { return lum.at(0, reflect(y, h), reflect(x, w)); };
  SobelMap m{h, w, std::vector<double>(lum.pixels())};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (p(y - 1, x + 1) - p(y - 1, x - 1)) + 2.0 * (p(y, x + 1) - p(y, x - 1)) +
                        (p(y + 1, x + 1) - p(y + 1, x - 1));
      const double gy = (p(y + 1, x - 1) - p(y - 1, x - 1)) + 2.0 * (p(y + 1, x) - p(y - 1, x)) +
                        (p(y + 1, x + 1) - p(y - 1, x + 1));
      m.data[static_cast<size_t>(y) * static_cast<size_t>(w) + static_cast<size_t>(x)] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Color statistics

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd inv_sqrtm_pd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() <= 0.0) throw std::invalid_argument("inv_sqrtm_pd: matrix is not positive definite");
  const Eigen::VectorXd d = ev.cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

ColorMoments color_moments(const Image& rgb) {
  require_rgb("color_moments", rgb);
  const size_t n = rgb.pixels();
  ColorMoments m;
  m.mean.setZero();
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += rgb.data[static_cast<size_t>(c) * n + i];
    m.mean[c] = s / static_cast<double>(n);
  }
  m.covariance.setZero();
  for (size_t i = 0; i < n; ++i) {
    Eigen::Vector3d d(rgb.data[i] - m.mean[0], rgb.data[n + i] - m.mean[1], rgb.data[2 * n + i] - m.mean[2]);
    m.covariance += d * d.transpose();
  }
  m.covariance /= static_cast<double>(n);
  return m;
}

ColorTransform fit_recolor(const Image& content, const Image& style, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("recolor: eps must be positive");
  const ColorMoments c = color_moments(content);
  const ColorMoments s = color_moments(style);
  const Eigen::Matrix3d reg = eps * Eigen::Matrix3d::Identity();
  ColorTransform t;
  t.matrix = sqrtm_psd(s.covariance + reg) * inv_sqrtm_pd(c.covariance + reg);
  t.content_mean = c.mean;
  t.style_mean = s.mean;
  return t;
}

Image apply_color_transform(const Image& content, const ColorTransform& t, bool clamp_output) {
  require_rgb("apply_color_transform", content);
  const size_t n = content.pixels();
  Image out(3, content.height, content.width);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d x(content.data[i], content.data[n + i], content.data[2 * n + i]);
    const Eigen::Vector3d y = t.matrix * (x - t.content_mean) + t.style_mean;
    for (int c = 0; c < 3; ++c) {
      out.data[static_cast<size_t>(c) * n + i] = clamp_output ? std::clamp(y[c], 0.0, 1.0) : y[c];
    }
  }
  return out;
}

Image recolor(const Image& content, const Image& style, double eps) {
  return apply_color_transform(content, fit_recolor(content, style, eps), true);
}

// ---------------------------------------------------------------------------
// Prior

PriorStages build_prior_stages(const Image& content, const Image& style, const PriorConfig& cfg) {
  cfg.validate();
  require_rgb("build_prior", content);
  require_rgb("build_prior", style);
  PriorStages st;
  st.blurred = cfg.blur_enabled ? gaussian_blur(content, cfg.blur_kernel, cfg.effective_blur_sigma()) : content;
  st.filtered = bilateral_filter(st.blurred, cfg.bilateral_diameter, cfg.bilateral_sigma / 255.0, cfg.bilateral_sigma);
  st.recolored = recolor(st.filtered, style);
  st.weighted = st.recolored;
  for (double& v : st.weighted.data) v *= cfg.prior_weight;
  return st;
}

Image build_prior(const Image& content, const Image& style, const PriorConfig& cfg) {
  return build_prior_stages(content, style, cfg).weighted;
}

Image build_self_prior(const Image& content, const PriorConfig& cfg) {
  cfg.validate();
  require_rgb("build_self_prior", content);
  Image img = cfg.blur_enabled ? gaussian_blur(content, cfg.blur_kernel, cfg.effective_blur_sigma()) : content;
  img = bilateral_filter(img, cfg.bilateral_diameter, cfg.bilateral_sigma / 255.0, cfg.bilateral_sigma);
  for (double& v : img.data) v *= cfg.prior_weight;
  return img;
}

// ---------------------------------------------------------------------------
// Patches

std::vector<std::pair<int, int>> sample_positions(int height, int width, int n, int patch_size, uint64_t seed) {
  if (patch_size < 1 || patch_size > std::min(height, width)) {
    throw std::invalid_argument("sample_patches: patch size " + std::to_string(patch_size) + " exceeds image " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  if (n < 2) throw std::invalid_argument("sample_patches: need at least 2 patches");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ry(0, height - patch_size), rx(0, width - patch_size);
  std::vector<std::pair<int, int>> pos;
  pos.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int y = ry(rng);
    const int x = rx(rng);
    pos.emplace_back(y, x);
  }
  return pos;
}

double patch_score(const SobelMap& sobel, int y, int x, int patch_size) {
  double s = 0.0;
  for (int r = 0; r < patch_size; ++r)
    for (int c = 0; c < patch_size; ++c) s += sobel.at(y + r, x + c);
  return s / static_cast<double>(patch_size * patch_size);
}

std::vector<ScoredPatch> sample_patches(const Image& img, const SobelMap& sobel_source, int n, int patch_size,
                                        uint64_t seed, int source_id) {
  validate_image(img, "sample_patches");
  if (sobel_source.height != img.height || sobel_source.width != img.width) {
    throw std::invalid_argument("sample_patches: Sobel map is not aligned with the image");
  }
  const auto pos = sample_positions(img.height, img.width, n, patch_size, seed);
  std::vector<ScoredPatch> out;
  out.reserve(pos.size());
  int order = 0;
  for (const auto& [y, x] : pos) {
    ScoredPatch p;
    p.crop = crop(img, y, x, patch_size, patch_size);
    p.score = patch_score(sobel_source, y, x, patch_size);
    p.x = x;
    p.y = y;
    p.source_id = source_id;
    p.order = order++;
    out.push_back(std::move(p));
  }
  return out;
}

std::pair<std::vector<ScoredPatch>, std::vector<ScoredPatch>> sort_split_patches(std::vector<ScoredPatch> patches) {
  if (patches.size() % 2 != 0) {
    throw std::invalid_argument("sort_split_patches: need an even number of patches, got " +
                                std::to_string(patches.size()));
  }
  std::stable_sort(patches.begin(), patches.end(),
                   [](const ScoredPatch& a, const ScoredPatch& b) { return a.score < b.score; });
  const auto half = static_cast<std::ptrdiff_t>(patches.size() / 2);
  std::vector<ScoredPatch> simple(std::make_move_iterator(patches.begin()),
                                  std::make_move_iterator(patches.begin() + half));
  std::vector<ScoredPatch> complex(std::make_move_iterator(patches.begin() + half),
                                   std::make_move_iterator(patches.end()));
  return {std::move(simple), std::move(complex)};
}

// ---------------------------------------------------------------------------
// Geometry

Image resize_bilinear(const Image& img, int height, int width) {
  validate_image(img, "resize_bilinear");
  if (height == img.height && width == img.width) return img;
  Image out(img.channels, height, width);
  const double sy = static_cast<double>(img.height) / height;
  const double sx = static_cast<double>(img.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
        const double bot = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Image resize_nearest(const Image& img, int height, int width) {
  validate_image(img, "resize_nearest");
  Image out(img.channels, height, width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        out.at(c, y, x) = img.at(c, static_cast<int>(static_cast<int64_t>(y) * img.height / height),
                                 static_cast<int>(static_cast<int64_t>(x) * img.width / width));
  return out;
}

Image crop(const Image& img, int y, int x, int height, int width) {
  if (y < 0 || x < 0 || height <= 0 || width <= 0 || y + height > img.height || x + width > img.width) {
    throw std::invalid_argument("crop: window outside image");
  }
  Image out(img.channels, height, width);
  for (int c = 0; c < img.channels; ++c)
    for (int r = 0; r < height; ++r)
      for (int q = 0; q < width; ++q) out.at(c, r, q) = img.at(c, y + r, x + q);
  return out;
}

Image transpose(const Image& img) {
  Image out(img.channels, img.width, img.height);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(c, x, y) = img.at(c, y, x);
  return out;
}

}  // namespace neat::imgproc
