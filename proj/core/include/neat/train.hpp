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
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "neat/checkpoint.hpp"
#include "neat/image.hpp"
#include "neat/imgproc.hpp"
#include "neat/losses.hpp"
#include "neat/nets.hpp"

namespace neat::train {

using diff::Tensor;

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  std::filesystem::path content_manifest;
  std::filesystem::path style_manifest;
  std::filesystem::path output_dir = "run";
  std::filesystem::path resume;  // checkpoint to continue from; empty starts fresh

  int crop_size = 256;
  int batch = 4;
  int64_t steps = 1000;
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  int accumulation_subbatch = 0;  // 0 disables splitting
  int64_t checkpoint_every = 0;   // 0 writes only the final checkpoint
  int patch_size = 0;             // 0 selects crop_size / 4
  int patch_count = 8;

  losses::LossWeights weights;
  imgproc::PriorConfig prior;
  nets::NetConfig net;

  int effective_patch_size() const { return patch_size > 0 ? patch_size : crop_size / 4; }
  /// Shape checks only; manifests are checked when the data is loaded.
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` text; '#' starts a comment. Relative paths resolve
/// against `base_dir`. Unknown keys are errors.
TrainConfig parse_train_config(const std::string& text, const std::filesystem::path& base_dir = {});
TrainConfig load_train_config(const std::filesystem::path& path);
/// Round-trippable key=value rendering, echoed into run directories.
std::string format_train_config(const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Data

/// Missing, empty or undecodable training data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<std::filesystem::path> files;  // resolved
};

/// One relative path per line, resolved against the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path);

struct Dataset {
  std::vector<Image> contents;
  std::vector<Image> styles;
};

/// Decodes every listed image and rescales it so its shorter side equals
/// `crop_size`.
Dataset load_dataset(const TrainConfig& cfg);
Image fit_short_side(const Image& img, int side);

struct Batch {
  std::vector<Image> contents;       // one per content slot
  std::vector<Image> styles;         // one crop per style slot
  std::vector<Image> styles_second;  // a second crop of the same style image
  std::vector<std::pair<int, int>> pairs;  // (content slot, style slot)
};

/// Slot assignment for `batch` pairs. With four or more pairs every style is
/// reused across two contents.
std::vector<std::pair<int, int>> pair_layout(int batch);

/// Crops and pairings are a pure function of (cfg.seed, step).
Batch sample_batch(const Dataset& data, const TrainConfig& cfg, int64_t step);

/// Per-step generator seed; `salt` separates independent streams.
uint64_t derive_seed(uint64_t seed, int64_t step, uint32_t salt);

// ---------------------------------------------------------------------------
// Optimization

/// Adaptive-moment optimizer. Moments and parameters are rounded to float32
/// after every update so that a checkpoint captures the exact state.
class Adam {
 public:
  Adam(double lr = 1e-4, double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8);

  /// Updates every trainable tensor that carries a gradient.
  void step(const std::vector<diff::NamedTensor>& params);
  int64_t steps() const { return t_; }
  double learning_rate() const { return lr_; }

  void save(Checkpoint& ckpt, const std::string& prefix) const;
  void load(const Checkpoint& ckpt, const std::string& prefix);

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

/// Raised when a step produced a non-finite value; parameters and optimizer
/// state are restored before it propagates.
class TrainStepError : public std::runtime_error {
 public:
  TrainStepError(std::string term, const std::string& detail);
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, nets::ModelParams params);

  /// Discriminator update followed by the generator update; returns the
  /// generator-side report.
  losses::LossReport step(const Batch& batch, int64_t step_index);
  /// Discriminator update only; returns its loss.
  double discriminator_step(const Batch& batch, int64_t step_index);
  /// Generator-side terms without any update.
  losses::LossReport evaluate(const Batch& batch, int64_t step_index);
  /// The weighted generator objective as a graph, contrastive terms evaluated
  /// on the full code set. Discriminators are held fixed.
  Tensor objective(const Batch& batch, int64_t step_index);

  nets::ModelParams& params() { return params_; }
  const nets::ModelParams& params() const { return params_; }
  const TrainConfig& config() const { return cfg_; }
  int64_t completed_steps() const { return completed_; }

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  struct Forward;
  Forward forward(const Batch& batch, bool with_identity) const;
  double run_discriminator(const Forward& fw, int64_t step_index);
  std::array<Tensor, losses::kTermCount> generator_terms(const Forward& fw, int64_t step_index, int subbatch,
                                                         losses::TermValues& values) const;
  losses::LossReport run_generator(const Forward& fw, int64_t step_index, bool update);

  TrainConfig cfg_;
  nets::ModelParams params_;
  Adam gen_opt_;
  Adam disc_opt_;
  int64_t completed_ = 0;
};

// ---------------------------------------------------------------------------
// Logit accumulation

using CodeFn = std::function<Tensor(int index)>;
using CodeLossFn = std::function<Tensor(const Tensor& codes)>;

struct AccumulatedLoss {
  double value = 0.0;
  /// Sum of the per-subbatch spliced losses; its gradient equals the gradient
  /// of the full-batch loss.
  Tensor surrogate;
};

/// Two-pass evaluation of a batch-coupled loss. Pass one computes every code
/// without gradients and evaluates the loss; pass two re-computes each
/// subbatch with gradients and splices it into the fixed code set.
AccumulatedLoss accumulate_codes(const CodeFn& code_fn, int count, int subbatch, const CodeLossFn& loss_fn);

/// As accumulate_codes, but back-propagates each spliced subbatch loss
/// immediately so only one subbatch graph is alive at a time. Parameter
/// gradients accumulate; returns the loss value.
double logit_accumulated_contrastive(const CodeFn& code_fn, int count, int subbatch, const CodeLossFn& loss_fn);

// ---------------------------------------------------------------------------
// Driver

struct FitResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path loss_csv;
  std::vector<losses::LossReport> reports;
};

/// Runs (or resumes) training, appending one CSV row per step and writing
/// periodic and final checkpoints under cfg.output_dir.
FitResult fit(const TrainConfig& cfg, const std::function<void(const losses::LossReport&)>& on_step = {});

}  // namespace neat::train
