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

#include "neat/infer.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace neat::infer {

namespace d = neat::diff;
using diff::Tensor;

void StylizeOptions::validate() const {
  if (!std::isfinite(alpha) || alpha < 0.0) throw std::invalid_argument("alpha must be finite and >= 0");
  if (output_size < 0 || (output_size > 0 && output_size < 16)) {
    throw std::invalid_argument("output size must be 0 (native) or at least 16");
  }
  prior.validate();
}

WorkingSize working_size(int height, int width, int output_size) {
  double h = height, w = width;
  if (output_size > 0) {
    const double scale = static_cast<double>(output_size) / std::max(height, width);
    h = std::round(height * scale);
    w = std::round(width * scale);
  }
  WorkingSize ws{static_cast<int>(h) / 8 * 8, static_cast<int>(w) / 8 * 8};
  if (ws.height < 16 || ws.width < 16) {
    throw std::invalid_argument("image " + std::to_string(height) + "x" + std::to_string(width) +
                                " is too small to stylize (needs at least 16x16)");
  }
  return ws;
}

namespace {

Image to_size(const Image& img, WorkingSize ws) {
  if (img.height == ws.height && img.width == ws.width) return img;
  return imgproc::resize_bilinear(img, ws.height, ws.width);
}

nets::FusedFeatures fuse(const nets::ModelParams& p, const Image& prior, const Image& style) {
  return nets::transform(p, nets::encode(p, to_tensor(prior)), nets::encode(p, to_tensor(style)));
}

Image decode(const nets::ModelParams& p, const nets::FusedFeatures& fused, const Image& base) {
  return from_tensor(nets::decode_deltas(p, fused, to_tensor(base)).stylized);
}

}  // namespace

StylizeTrace stylize_trace(const Image& content, const Image& style, const nets::ModelParams& p,
                           const imgproc::PriorConfig& prior) {
  d::NoGradGuard no_grad;
  StylizeTrace t;
  t.prior = imgproc::build_prior(content, style, prior);
  const auto fused = fuse(p, t.prior, style);
  t.decoder_input = fused.features;
  t.output = decode(p, fused, t.prior);
  return t;
}

StylizeTrace reconstruction_trace(const Image& content, const nets::ModelParams& p,
                                  const imgproc::PriorConfig& prior) {
  d::NoGradGuard no_grad;
  StylizeTrace t;
  t.prior = imgproc::build_self_prior(content, prior);
  const auto fused = fuse(p, t.prior, t.prior);
  t.decoder_input = fused.features;
  t.output = decode(p, fused, t.prior);
  return t;
}

StylizeTrace stylize_interp_trace(const Image& content, const Image& style, const nets::ModelParams& p,
                                  double alpha, const imgproc::PriorConfig& prior) {
  if (!std::isfinite(alpha) || alpha < 0.0) throw std::invalid_argument("alpha must be finite and >= 0");
  d::NoGradGuard no_grad;
  const Image self_prior = imgproc::build_self_prior(content, prior);
  const Image sty_prior = imgproc::build_prior(content, style, prior);
  const auto rec = fuse(p, self_prior, self_prior);
  const auto sty = fuse(p, sty_prior, style);

  StylizeTrace t;
  t.decoder_input = d::add(d::mul_scalar(rec.features, 1.0 - alpha), d::mul_scalar(sty.features, alpha));
  t.prior = self_prior;
  for (size_t i = 0; i < t.prior.data.size(); ++i) {
    t.prior.data[i] = (1.0 - alpha) * self_prior.data[i] + alpha * sty_prior.data[i];
  }
  t.output = decode(p, {t.decoder_input, sty.height, sty.width}, t.prior);
  return t;
}

Image stylize(const Image& content, const Image& style, const nets::ModelParams& p, const StylizeOptions& opts) {
  return stylize_interp(content, style, p, opts.alpha, opts);
}

Image stylize_interp(const Image& content, const Image& style, const nets::ModelParams& p, double alpha,
                     const StylizeOptions& opts) {
  opts.validate();
  validate_image(content, "stylize content", 16);
  validate_image(style, "stylize style", 16);
  const WorkingSize ws = working_size(content.height, content.width, opts.output_size);
  const WorkingSize ss = working_size(style.height, style.width, std::max(ws.height, ws.width));
  const Image c = to_size(content, ws);
  const Image s = to_size(style, ss);
  Image out = alpha == 1.0 ? stylize_trace(c, s, p, opts.prior).output
                           : stylize_interp_trace(c, s, p, alpha, opts.prior).output;
  if (opts.output_size == 0 && (ws.height != content.height || ws.width != content.width)) {
    out = imgproc::resize_bilinear(out, content.height, content.width);
  }
  return out;
}

// ---------------------------------------------------------------------------

int FramesReport::processed() const {
  return static_cast<int>(std::count_if(frames.begin(), frames.end(), [](const FrameResult& f) { return f.ok; }));
}

int FramesReport::skipped() const { return static_cast<int>(frames.size()) - processed(); }

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ImageIoError("frame directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FramesReport stylize_frames(const std::filesystem::path& in_dir, const Image& style, const nets::ModelParams& p,
                            const StylizeOptions& opts, const std::filesystem::path& out_dir, int jobs) {
  const auto inputs = list_frames(in_dir);
  if (inputs.empty()) throw ImageIoError("frame directory " + in_dir.string() + " contains no frames");
  std::filesystem::create_directories(out_dir);

  FramesReport report;
  report.frames.resize(inputs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < inputs.size(); i = next++) {
      FrameResult& r = report.frames[i];
      r.input = inputs[i];
      r.output = out_dir / inputs[i].filename();
      try {
        save_image(stylize(load_image(r.input), style, p, opts), r.output);
        r.ok = true;
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  };
  const int n = std::clamp(jobs, 1, static_cast<int>(inputs.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return report;
}

}  // namespace neat::infer
