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

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neat/diff.hpp"
#include "neat/imgproc.hpp"
#include "neat/nets.hpp"

namespace neat::losses {

using diff::Tensor;

inline constexpr int kTermCount = 8;

enum Term : int {
  kStyle = 0,
  kAdversarial,
  kContent,
  kIdentity,
  kContrastiveStyle,
  kContrastiveContent,
  kPatchSimple,
  kPatchComplex,
};

/// CSV/report names, in term order.
inline constexpr std::array<const char*, kTermCount> kTermNames{
    "style", "adversarial", "content", "identity", "contrastive_style", "contrastive_content", "patch_simple",
    "patch_complex"};

struct LossWeights {
  double style = 1.0;
  double adversarial = 1.0;
  double content = 1.0;
  double identity = 1.0;
  double contrastive_style = 0.3;
  double contrastive_content = 0.3;
  double patch_simple = 0.25;
  double patch_complex = 0.75;
  double identity_pixel = 50.0;
  double identity_feature = 1.0;
  double temperature = 0.2;

  std::array<double, kTermCount> lambdas() const;
  void validate() const;
};

using TermValues = std::array<double, kTermCount>;

struct LossReport {
  int64_t step = 0;
  TermValues terms{};  // unweighted
  double total = 0.0;
};

class NonFiniteTermError : public std::runtime_error {
 public:
  NonFiniteTermError(std::string term, double value);
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

/// Weighted sum, accumulated in term order.
LossReport total_loss(const TermValues& terms, const LossWeights& w, int64_t step = 0);
/// Differentiable counterpart of total_loss over term tensors (undefined
/// entries count as zero).
Tensor weighted_total(const std::array<Tensor, kTermCount>& terms, const LossWeights& w);

std::string report_csv_header();
std::string report_csv_row(const LossReport& r);

// ---------------------------------------------------------------------------
// Perceptual terms

/// Sum over levels of ||mu_a - mu_b|| + ||sigma_a - sigma_b|| on per-channel
/// spatial statistics.
Tensor style_loss(std::span<const Tensor> a, std::span<const Tensor> b);
Tensor style_loss(const nets::FeaturePyramid& a, const nets::FeaturePyramid& b);

/// L2 distance between two feature maps.
Tensor content_loss(const Tensor& a, const Tensor& b);
/// Distance at the content level.
Tensor content_loss(const nets::FeaturePyramid& a, const nets::FeaturePyramid& b);

/// pixel_weight * ||recon - orig|| + feature_weight * sum_i ||phi_i(recon) - phi_i(orig)||
/// for one reconstruction pair.
Tensor identity_term(const Tensor& recon, const Tensor& orig, const nets::FeaturePyramid& recon_py,
                     const nets::FeaturePyramid& orig_py, double pixel_weight, double feature_weight);

struct IdentityInputs {
  Tensor icc, ic, iss, is;
  const nets::FeaturePyramid* icc_py = nullptr;
  const nets::FeaturePyramid* ic_py = nullptr;
  const nets::FeaturePyramid* iss_py = nullptr;
  const nets::FeaturePyramid* is_py = nullptr;
};
Tensor identity_loss(const IdentityInputs& in, double pixel_weight, double feature_weight);

// ---------------------------------------------------------------------------
// Adversarial terms

struct AdversarialLosses {
  Tensor disc;  // -log p(real) - log(1 - p(fake))
  Tensor gen;   // -log p(fake)
};

/// p = sigmoid(mean logit). Evaluated through softplus for stability.
AdversarialLosses adversarial_losses(const Tensor& real_logits, const Tensor& fake_logits);
/// -log sigmoid(mean logit) and -log(1 - sigmoid(mean logit)).
Tensor bce_real(const Tensor& logits);
Tensor bce_fake(const Tensor& logits);

// ---------------------------------------------------------------------------
// Contrastive terms

/// Anchor rows and the one positive drawn for each. Rows whose group has no
/// other member are left out.
struct ContrastivePlan {
  std::vector<int> anchors;
  std::vector<int> positives;
};

/// Draws one same-group positive per candidate anchor from a generator seeded
/// with `seed`.
ContrastivePlan make_contrastive_plan(std::span<const int> groups, std::span<const int> anchor_candidates,
                                      uint64_t seed);

struct ContrastiveResult {
  Tensor loss;
  bool degenerate = false;  // no anchor with a positive and a negative; loss is 0
};

/// InfoNCE over unit codes [K,D]: per anchor,
/// -log(exp(s_ap/tau) / (exp(s_ap/tau) + sum_{n in other groups} exp(s_an/tau))),
/// averaged over anchors that have at least one negative.
ContrastiveResult info_nce(const Tensor& codes, std::span<const int> groups, const ContrastivePlan& plan,
                           double tau);

/// Stacks [D] codes into [K,D].
Tensor stack_codes(const std::vector<Tensor>& codes);

// ---------------------------------------------------------------------------
// Patch co-occurrence terms

struct PatchInputs {
  Tensor stylized;      // [3,H,W]; detach for the discriminator update
  Tensor style;         // reference crop
  Tensor style_second;  // second crop of the same style: real candidates
  const imgproc::SobelMap* content_sobel = nullptr;  // scores stylized patches
  const imgproc::SobelMap* style_sobel = nullptr;
  const imgproc::SobelMap* style_second_sobel = nullptr;
  int patch_size = 16;
  int count = 8;
  uint64_t seed = 0;
};

struct PatchLosses {
  Tensor gen_simple;   // mean -log sigmoid over simple stylized candidates
  Tensor gen_complex;
  Tensor disc;         // BCE, real = second style crop, fake = stylized; both routes summed
  double fake_logit_mean = 0.0;
  double real_logit_mean = 0.0;
  /// Scores of the stylized candidates per route, for inspection.
  std::vector<double> simple_scores, complex_scores;
};

PatchLosses patch_cooccurrence_loss(const nets::ModelParams& p, const PatchInputs& in);

}  // namespace neat::losses
