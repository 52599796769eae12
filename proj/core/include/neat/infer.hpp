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
#include <string>
#include <vector>

#include "neat/image.hpp"
#include "neat/imgproc.hpp"
#include "neat/nets.hpp"

namespace neat::infer {

struct StylizeOptions {
  double alpha = 1.0;
  imgproc::PriorConfig prior;
  /// Longer output side in pixels; 0 keeps the native size.
  int output_size = 0;
  uint64_t seed = 0;

  void validate() const;
};

/// Working resolution: scaled to output_size (if set) and rounded down to
/// multiples of 8. Both sides must end up at least 16.
struct WorkingSize {
  int height = 0;
  int width = 0;
};
WorkingSize working_size(int height, int width, int output_size);

/// Everything produced along the stylization path, for inspection.
struct StylizeTrace {
  Image prior;                  // base the deltas are added to
  diff::Tensor decoder_input;   // fused features fed to the decoder
  Image output;                 // at the working resolution
};

/// Both images must already be at a valid working size.
StylizeTrace stylize_trace(const Image& content, const Image& style, const nets::ModelParams& p,
                           const imgproc::PriorConfig& prior);

/// Linear blend of the reconstruction path (content with itself, no recolor)
/// and the stylization path; alpha > 1 extrapolates.
StylizeTrace stylize_interp_trace(const Image& content, const Image& style, const nets::ModelParams& p,
                                  double alpha, const imgproc::PriorConfig& prior);

/// Content self-stylization on its own un-recolored prior.
StylizeTrace reconstruction_trace(const Image& content, const nets::ModelParams& p,
                                  const imgproc::PriorConfig& prior);

/// Handles resizing to and from the working size. alpha == 1 takes the plain
/// stylization path.
Image stylize(const Image& content, const Image& style, const nets::ModelParams& p, const StylizeOptions& opts = {});
Image stylize_interp(const Image& content, const Image& style, const nets::ModelParams& p, double alpha,
                     const StylizeOptions& opts = {});

struct FrameResult {
  std::filesystem::path input;
  std::filesystem::path output;
  bool ok = false;
  std::string error;
};

struct FramesReport {
  std::vector<FrameResult> frames;
  int processed() const;
  int skipped() const;
};

/// Stylizes every image in `in_dir` (sorted by name) into `out_dir` under the
/// same file name. Undecodable frames are skipped and reported.
FramesReport stylize_frames(const std::filesystem::path& in_dir, const Image& style, const nets::ModelParams& p,
                            const StylizeOptions& opts, const std::filesystem::path& out_dir, int jobs = 1);

/// Image files in a directory, sorted by name.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

}  // namespace neat::infer
