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
#include <functional>
#include <string>
#include <vector>

#include "neat/image.hpp"
#include "neat/infer.hpp"
#include "neat/nets.hpp"

namespace neat::evalkit {

// ---------------------------------------------------------------------------
// Metrics

/// Symmetric squared Chamfer distance between the RGB point sets of two
/// images, in 0-255 units, each side normalized by its pixel count. When
/// `sample` > 0 and a side has more pixels, that many are drawn (seeded).
double chamfer_color(const Image& a, const Image& b, int64_t sample = 0, uint64_t seed = 0);

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // unbiased
};

/// Treats each column of `samples` [D,N] as one observation.
GaussianMoments gaussian_moments(const Eigen::MatrixXd& samples);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the square root
/// evaluated as (S_a^{1/2} S_b S_a^{1/2})^{1/2} and negative eigenvalues
/// clamped to zero.
double frechet_distance(const GaussianMoments& a, const GaussianMoments& b);

/// Feature moments over spatial positions of the stride-2 encoder level.
GaussianMoments metric_features(const Image& img, const nets::ModelParams& p);
double sifid(const Image& a, const Image& b, const nets::ModelParams& p);

/// Encoder-feature distance between two images: per level, features are
/// normalized to unit length over channels at each position, then the mean
/// squared difference over positions is taken; levels are averaged. A proxy
/// for learned perceptual distances, not one of them.
double content_proxy(const Image& content, const Image& stylized, const nets::ModelParams& p);

struct PairMetrics {
  std::string content;
  std::string style;
  double chamfer = 0.0;
  double sifid = 0.0;
  double content_proxy = 0.0;
};

struct MetricReport {
  std::vector<PairMetrics> pairs;
  PairMetrics mean() const;
};

struct EvalOptions {
  infer::StylizeOptions stylize;
  int64_t chamfer_sample = 4096;
  uint64_t seed = 0;
};

/// Pairs CSV: header line, then `content_path,style_path` rows. Relative
/// paths resolve against the CSV's directory.
std::vector<std::pair<std::filesystem::path, std::filesystem::path>> read_pairs_csv(const std::filesystem::path& path);

PairMetrics evaluate_pair(const Image& content, const Image& style, const Image& stylized, const nets::ModelParams& p,
                          const EvalOptions& opts);
MetricReport evaluate_pairs(const std::filesystem::path& pairs_csv, const nets::ModelParams& p,
                            const EvalOptions& opts);
std::string metric_csv(const MetricReport& r);

// ---------------------------------------------------------------------------
// Timing

struct Resolution {
  int height = 0;
  int width = 0;
  std::string label() const;
};

/// "256", "512x384" (width x height), or comma lists of those.
std::vector<Resolution> parse_resolutions(const std::string& text);
std::vector<Resolution> default_resolutions();

struct TimingRow {
  Resolution resolution;
  bool available = true;
  double seconds = 0.0;  // median per image
  int runs = 0;
  std::string note;
};

using Clock = std::function<double()>;
/// Monotonic seconds.
double steady_seconds();

/// Median wall time of `work` over `runs` timed calls after `warmup` untimed
/// ones.
double median_time(const std::function<void()>& work, int runs, int warmup, const Clock& clock = steady_seconds);

struct BenchOptions {
  int runs = 10;
  int warmup = 2;
  infer::StylizeOptions stylize;
  uint64_t seed = 0;
};

/// End-to-end stylization (prior included) on synthetic inputs per
/// resolution. Allocation failures mark the row unavailable.
std::vector<TimingRow> bench(const nets::ModelParams& p, const std::vector<Resolution>& resolutions,
                             const BenchOptions& opts = {});

/// Aligned table: one method row, one seconds/image column per resolution.
std::string timing_table(const std::vector<TimingRow>& rows, const std::string& method = "neat");
std::string timing_csv(const std::vector<TimingRow>& rows);

}  // namespace neat::evalkit
