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

#include "neat/losses.hpp"

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace neat::losses {

namespace d = neat::diff;

std::array<double, kTermCount> LossWeights::lambdas() const {
  return {style, adversarial, content, identity, contrastive_style, contrastive_content, patch_simple, patch_complex};
}

void LossWeights::validate() const {
  const auto l = lambdas();
  for (int i = 0; i < kTermCount; ++i) {
    if (!(l[static_cast<size_t>(i)] >= 0.0) || !std::isfinite(l[static_cast<size_t>(i)])) {
      throw std::invalid_argument(std::string("loss weight for ") + kTermNames[static_cast<size_t>(i)] +
                                  " must be finite and >= 0");
    }
  }
  if (!(identity_pixel >= 0.0) || !(identity_feature >= 0.0)) {
    throw std::invalid_argument("identity sub-weights must be >= 0");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw std::invalid_argument("temperature must be > 0");
}

NonFiniteTermError::NonFiniteTermError(std::string term, double value)
    : std::runtime_error("loss term '" + term + "' is not finite (" + std::to_string(value) + ")"),
      term_(std::move(term)) {}

LossReport total_loss(const TermValues& terms, const LossWeights& w, int64_t step) {
  const auto l = w.lambdas();
  LossReport r;
  r.step = step;
  r.terms = terms;
  for (size_t i = 0; i < terms.size(); ++i) {
    if (!std::isfinite(terms[i])) throw NonFiniteTermError(kTermNames[i], terms[i]);
    r.total += l[i] * terms[i];
  }
  return r;
}

Tensor weighted_total(const std::array<Tensor, kTermCount>& terms, const LossWeights& w) {
  const auto l = w.lambdas();
  Tensor total = Tensor::scalar(0.0);
  for (size_t i = 0; i < terms.size(); ++i) {
    if (!terms[i].defined() || l[i] == 0.0) continue;
    total = d::add(total, d::mul_scalar(terms[i], l[i]));
  }
  return total;
}

std::string report_csv_header() {
  std::string h = "step";
  for (const char* n : kTermNames) h += std::string(",") + n;
  return h + ",total";
}

std::string report_csv_row(const LossReport& r) {
  std::ostringstream os;
  os << std::setprecision(17) << r.step;
  for (double v : r.terms) os << ',' << v;
  os << ',' << r.total;
  return os.str();
}

// ---------------------------------------------------------------------------

Tensor style_loss(std::span<const Tensor> a, std::span<const Tensor> b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("style_loss: level counts differ (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  Tensor total;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].dim(0) != b[i].dim(0)) {
      throw std::invalid_argument("style_loss: channel mismatch at level " + std::to_string(i));
    }
    Tensor term = d::add(d::l2_norm(d::sub(d::channel_mean(a[i]), d::channel_mean(b[i]))),
                         d::l2_norm(d::sub(d::channel_std(a[i]), d::channel_std(b[i]))));
    total = total.defined() ? d::add(total, term) : term;
  }
  return total;
}

Tensor style_loss(const nets::FeaturePyramid& a, const nets::FeaturePyramid& b) {
  return style_loss(std::span<const Tensor>(a.levels), std::span<const Tensor>(b.levels));
}

Tensor content_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("content_loss: shapes differ: " + d::shape_str(a.shape()) + " vs " +
                                d::shape_str(b.shape()));
  }
  return d::l2_norm(d::sub(a, b));
}

Tensor content_loss(const nets::FeaturePyramid& a, const nets::FeaturePyramid& b) {
  return content_loss(a[nets::kContentLevel], b[nets::kContentLevel]);
}

Tensor identity_term(const Tensor& recon, const Tensor& orig, const nets::FeaturePyramid& recon_py,
                     const nets::FeaturePyramid& orig_py, double pixel_weight, double feature_weight) {
  if (recon.shape() != orig.shape()) {
    throw std::invalid_argument("identity_loss: shapes differ: " + d::shape_str(recon.shape()) + " vs " +
                                d::shape_str(orig.shape()));
  }
  Tensor total = d::mul_scalar(d::l2_norm(d::sub(recon, orig)), pixel_weight);
  for (int i = 0; i < nets::kPyramidLevels; ++i) {
    total = d::add(total, d::mul_scalar(content_loss(recon_py[i], orig_py[i]), feature_weight));
  }
  return total;
}

Tensor identity_loss(const IdentityInputs& in, double pixel_weight, double feature_weight) {
  if (!in.icc_py || !in.ic_py || !in.iss_py || !in.is_py) {
    throw std::invalid_argument("identity_loss: all four pyramids are required");
  }
  return d::add(identity_term(in.icc, in.ic, *in.icc_py, *in.ic_py, pixel_weight, feature_weight),
                identity_term(in.iss, in.is, *in.iss_py, *in.is_py, pixel_weight, feature_weight));
}

// ---------------------------------------------------------------------------

Tensor bce_real(const Tensor& logits) { return d::softplus(d::neg(d::mean(logits))); }
Tensor bce_fake(const Tensor& logits) { return d::softplus(d::mean(logits)); }

AdversarialLosses adversarial_losses(const Tensor& real_logits, const Tensor& fake_logits) {
  return {d::add(bce_real(real_logits), bce_fake(fake_logits)), bce_real(fake_logits)};
}

// ---------------------------------------------------------------------------

ContrastivePlan make_contrastive_plan(std::span<const int> groups, std::span<const int> anchor_candidates,
                                      uint64_t seed) {
  std::mt19937_64 rng(seed);
  ContrastivePlan plan;
  const int k = static_cast<int>(groups.size());
  for (int a : anchor_candidates) {
    if (a < 0 || a >= k) throw std::invalid_argument("contrastive plan: anchor index out of range");
    std::vector<int> same;
    for (int j = 0; j < k; ++j)
      if (j != a && groups[static_cast<size_t>(j)] == groups[static_cast<size_t>(a)]) same.push_back(j);
    if (same.empty()) continue;
    std::uniform_int_distribution<size_t> pick(0, same.size() - 1);
    plan.anchors.push_back(a);
    plan.positives.push_back(same[pick(rng)]);
  }
  return plan;
}

ContrastiveResult info_nce(const Tensor& codes, std::span<const int> groups, const ContrastivePlan& plan,
                           double tau) {
  if (codes.rank() != 2 || codes.dim(0) != static_cast<int64_t>(groups.size())) {
    throw std::invalid_argument("info_nce: codes " + d::shape_str(codes.shape()) + " do not match " +
                                std::to_string(groups.size()) + " group labels");
  }
  if (plan.anchors.size() != plan.positives.size()) throw std::invalid_argument("info_nce: malformed plan");
  if (!(tau > 0.0)) throw std::invalid_argument("info_nce: temperature must be > 0");
  const int64_t k = codes.dim(0);
  Tensor logits = d::mul_scalar(d::matmul(codes, d::transpose(codes)), 1.0 / tau);
  Tensor total;
  int used = 0;
  for (size_t i = 0; i < plan.anchors.size(); ++i) {
    const int a = plan.anchors[i];
    const int pos = plan.positives[i];
    if (groups[static_cast<size_t>(pos)] != groups[static_cast<size_t>(a)] || pos == a) {
      throw std::invalid_argument("info_nce: positive " + std::to_string(pos) + " is not a same-group partner of " +
                                  std::to_string(a));
    }
    std::vector<int64_t> idx{a * k + pos};
    for (int64_t j = 0; j < k; ++j)
      if (groups[static_cast<size_t>(j)] != groups[static_cast<size_t>(a)]) idx.push_back(a * k + j);
    // Without negatives the row carries no contrast.
    if (idx.size() == 1) continue;
    Tensor row = d::gather(logits, idx);
    Tensor term = d::sub(d::logsumexp(row), d::slice(row, 0, 0, 1));
    total = total.defined() ? d::add(total, term) : term;
    ++used;
  }
  if (used == 0) return {d::mul_scalar(d::sum(logits), 0.0), true};
  return {d::mul_scalar(total, 1.0 / static_cast<double>(used)), false};
}

Tensor stack_codes(const std::vector<Tensor>& codes) {
  if (codes.empty()) throw std::invalid_argument("stack_codes: no codes");
  std::vector<Tensor> rows;
  rows.reserve(codes.size());
  for (const auto& c : codes) rows.push_back(d::reshape(c, {1, c.numel()}));
  return d::concat(rows, 0);
}

// ---------------------------------------------------------------------------

namespace {

struct RoutedPatches {
  std::vector<imgproc::ScoredPatch> simple, complex;
};

RoutedPatches route(const Tensor& img, const imgproc::SobelMap& sobel, int count, int patch, uint64_t seed) {
  const int h = static_cast<int>(img.dim(1)), w = static_cast<int>(img.dim(2));
  if (sobel.height != h || sobel.width != w) {
    throw std::invalid_argument("patch_cooccurrence_loss: Sobel map is " + std::to_string(sobel.height) + "x" +
                                std::to_string(sobel.width) + ", image is " + std::to_string(h) + "x" +
                                std::to_string(w));
  }
  const auto pos = imgproc::sample_positions(h, w, count, patch, seed);
  std::vector<imgproc::ScoredPatch> patches;
  for (size_t i = 0; i < pos.size(); ++i) {
    imgproc::ScoredPatch sp;
    sp.y = pos[i].first;
    sp.x = pos[i].second;
    sp.score = imgproc::patch_score(sobel, sp.y, sp.x, patch);
    sp.order = static_cast<int>(i);
    patches.push_back(std::move(sp));
  }
  auto [simple, complex] = imgproc::sort_split_patches(std::move(patches));
  return {std::move(simple), std::move(complex)};
}

std::vector<Tensor> crops(const Tensor& img, const std::vector<imgproc::ScoredPatch>& ps, int patch) {
  std::vector<Tensor> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(d::crop(img, p.y, p.x, patch, patch));
  return out;
}

uint64_t mix(uint64_t seed, uint64_t salt) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(salt)};
  uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

PatchLosses patch_cooccurrence_loss(const nets::ModelParams& p, const PatchInputs& in) {
  if (!in.content_sobel || !in.style_sobel) throw std::invalid_argument("patch_cooccurrence_loss: Sobel maps are required");
  for (const Tensor* t : {&in.stylized, &in.style}) {
    if (t->rank() != 3 || t->dim(1) < in.patch_size || t->dim(2) < in.patch_size) {
      throw std::invalid_argument("patch_cooccurrence_loss: image " + d::shape_str(t->shape()) +
                                  " is smaller than the patch size " + std::to_string(in.patch_size));
    }
  }
  const bool has_second = in.style_second.defined();
  const Tensor& second = has_second ? in.style_second : in.style;
  const imgproc::SobelMap* second_sobel = has_second ? in.style_second_sobel : in.style_sobel;
  if (!second_sobel) throw std::invalid_argument("patch_cooccurrence_loss: missing Sobel map for second style crop");

  const int ps = in.patch_size;
  const auto fake = route(in.stylized, *in.content_sobel, in.count, ps, mix(in.seed, 1));
  const auto refs = route(in.style, *in.style_sobel, in.count, ps, mix(in.seed, 2));
  const auto real = route(second, *second_sobel, in.count, ps, mix(in.seed, 3));

  PatchLosses out;
  for (const auto& sp : fake.simple) out.simple_scores.push_back(sp.score);
  for (const auto& sp : fake.complex) out.complex_scores.push_back(sp.score);

  Tensor disc_total;
  double fake_sum = 0.0, real_sum = 0.0;
  int fake_n = 0, real_n = 0;
  for (auto kind : {nets::PatchKind::kSimple, nets::PatchKind::kComplex}) {
    const bool simple = kind == nets::PatchKind::kSimple;
    const auto ref_t = crops(in.style, simple ? refs.simple : refs.complex, ps);
    const auto fake_t = crops(in.stylized, simple ? fake.simple : fake.complex, ps);
    const auto real_t = crops(second, simple ? real.simple : real.complex, ps);

    Tensor gen_sum, fake_bce, real_bce;
    for (const auto& cand : fake_t) {
      Tensor logit = nets::patch_disc(p, kind, cand, ref_t);
      fake_sum += logit.item();
      ++fake_n;
      Tensor g = bce_real(logit);
      Tensor f = bce_fake(logit);
      gen_sum = gen_sum.defined() ? d::add(gen_sum, g) : g;
      fake_bce = fake_bce.defined() ? d::add(fake_bce, f) : f;
    }
    for (const auto& cand : real_t) {
      Tensor logit = nets::patch_disc(p, kind, cand, ref_t);
      real_sum += logit.item();
      ++real_n;
      Tensor r = bce_real(logit);
      real_bce = real_bce.defined() ? d::add(real_bce, r) : r;
    }
    Tensor gen = d::mul_scalar(gen_sum, 1.0 / static_cast<double>(fake_t.size()));
    (simple ? out.gen_simple : out.gen_complex) = gen;
    Tensor disc = d::add(d::mul_scalar(real_bce, 1.0 / static_cast<double>(real_t.size())),
                         d::mul_scalar(fake_bce, 1.0 / static_cast<double>(fake_t.size())));
    disc_total = disc_total.defined() ? d::add(disc_total, disc) : disc;
  }
  out.disc = disc_total;
  out.fake_logit_mean = fake_sum / fake_n;
  out.real_logit_mean = real_sum / real_n;
  return out;
}

}  // namespace neat::losses
