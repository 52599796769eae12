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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "neat/grad_check.hpp"
#include "neat/losses.hpp"
#include "neat/nets.hpp"
#include "test_util.hpp"

namespace neat::nets {
namespace {

namespace d = neat::diff;
using neat::testing::random_image;
using neat::testing::random_tensor;

NetConfig tiny(int c = 4, bool zero_head = true) {
  NetConfig cfg;
  cfg.base_width = c;
  cfg.head_hidden = 8;
  cfg.code_dim = 6;
  cfg.seed = 3;
  cfg.zero_init_decoder_head = zero_head;
  return cfg;
}

// Constant-map propagation through one reflect-padded conv.
std::vector<double> conv_const(const Conv& c, const std::vector<double>& in) {
  const int64_t o = c.weight.dim(0), ci = c.weight.dim(1), k = c.weight.dim(2);
  std::vector<double> out(static_cast<size_t>(o));
  for (int64_t a = 0; a < o; ++a) {
    double acc = c.bias.data()[static_cast<size_t>(a)];
    for (int64_t b = 0; b < ci; ++b)
      for (int64_t t = 0; t < k * k; ++t) acc += c.weight.data()[static_cast<size_t>((a * ci + b) * k * k + t)] * in[static_cast<size_t>(b)];
    out[static_cast<size_t>(a)] = acc;
  }
  return out;
}

std::vector<double> relu_vec(std::vector<double> v) {
  for (auto& x : v) x = std::max(0.0, x);
  return v;
}

TEST(Encoder, PyramidShapes) {
  NetConfig cfg;
  cfg.base_width = 16;
  const ModelParams p(cfg);
  const auto py = encode(p, random_image(64, 64, 1));
  const std::array<d::Shape, 4> expect{d::Shape{16, 64, 64}, d::Shape{32, 32, 32}, d::Shape{64, 16, 16}, d::Shape{128, 8, 8}};
  for (int i = 0; i < 4; ++i) EXPECT_EQ(py[i].shape(), expect[static_cast<size_t>(i)]);
}

TEST(Encoder, Deterministic) {
  const ModelParams p(tiny());
  const Image img = random_image(32, 32, 2);
  const auto a = encode(p, img), b = encode(p, img);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(std::ranges::equal(a[i].data(), b[i].data()));
}

TEST(Encoder, ZeroImageMatchesBiasPropagation) {
  const ModelParams p(tiny());
  const auto py = encode(p, Image(3, 32, 32, 0.0));
  std::vector<double> v(3, 0.0);
  for (int s = 0; s < 4; ++s) {
    if (s > 0) v = conv_const(p.encoder.downs[static_cast<size_t>(s - 1)], v);
    v = relu_vec(conv_const(p.encoder.stages[static_cast<size_t>(s)][0], v));
    v = relu_vec(conv_const(p.encoder.stages[static_cast<size_t>(s)][1], v));
    const auto& lvl = py[s];
    const int64_t hw = lvl.dim(1) * lvl.dim(2);
    for (int64_t ch = 0; ch < lvl.dim(0); ++ch)
      for (int64_t i = 0; i < hw; i += 7) EXPECT_NEAR(lvl.data()[static_cast<size_t>(ch * hw + i)], v[static_cast<size_t>(ch)], 1e-12);
  }
}

TEST(Encoder, RejectsSizesNotDivisibleByEight) {
  const ModelParams p(tiny());
  EXPECT_THROW(encode(p, random_image(30, 32, 3)), std::invalid_argument);
}

TEST(Encoder, ParametersFrozen) {
  const ModelParams p(tiny());
  for (const auto& nt : p.encoder_parameters()) EXPECT_FALSE(nt.tensor.requires_grad()) << nt.name;
  for (const auto& nt : p.generator_parameters()) EXPECT_TRUE(nt.tensor.requires_grad()) << nt.name;
}

TEST(Transform, FourBlocks) {
  EXPECT_EQ(kTransformBlocks, 4);
  const ModelParams p(tiny());
  EXPECT_EQ(p.transform.blocks.size(), 4u);
  EXPECT_EQ(p.with_prefix("tr.block3.").size(), 8u);
  EXPECT_TRUE(p.with_prefix("tr.block4.").empty());
}

TEST(Transform, SingleColumnAttentionClosedForm) {
  const ModelParams p(tiny());
  const auto& blk = p.transform.blocks[0];
  const int64_t dim = p.config().fused();
  const auto f = random_tensor({dim, 1}, 4);
  const auto s = random_tensor({dim, 1}, 5);
  const auto out = attention_block(blk, f, s);
  const auto expect = d::add(f, blk.out(blk.value(s)));
  EXPECT_LT(neat::testing::max_abs_diff(out.data(), expect.data()), 1e-12);
}

TEST(Transform, SelfAttentionFiniteAndShaped) {
  const ModelParams p(tiny());
  const auto py = encode(p, random_image(32, 48, 6));
  const auto fused = transform(p, py, py);
  EXPECT_EQ(fused.features.shape(), (d::Shape{p.config().fused(), 4 * 6}));
  EXPECT_EQ(fused.height, 4);
  EXPECT_EQ(fused.width, 6);
  for (double v : fused.features.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Transform, BandedAttentionMatchesDense) {
  const auto q = random_tensor({6, 2100}, 7);
  const auto k = random_tensor({6, 2100}, 8);
  const auto v = random_tensor({5, 2100}, 9);
  d::Tensor banded;
  {
    d::NoGradGuard ng;
    banded = attend(q, k, v, 0.4);
  }
  const auto scores = d::mul_scalar(d::matmul(d::transpose(q), k), 0.4);
  const auto dense = d::matmul(v, d::transpose(d::softmax(scores, 1)));
  EXPECT_LT(neat::testing::max_abs_diff(banded.data(), dense.data()), 1e-10);
}

TEST(Decoder, ZeroHeadReturnsPrior) {
  const ModelParams p(tiny());
  const auto py = encode(p, random_image(32, 32, 10));
  const auto prior = to_tensor(random_image(32, 32, 11, 0.0, 0.5));
  const auto res = decode_deltas(p, transform(p, py, py), prior);
  EXPECT_TRUE(std::ranges::equal(res.stylized.data(), prior.data()));
}

TEST(Decoder, ClampAtUpperBound) {
  ModelParams p(tiny());
  // A large head bias drives tanh to 1.
  for (auto& b : p.decoder.head.bias.mutable_data()) b = 50.0;
  const auto py = encode(p, random_image(16, 16, 12));
  const auto prior = d::Tensor::full({3, 16, 16}, 0.8);
  const auto res = decode_deltas(p, transform(p, py, py), prior);
  for (double v : res.stylized.data()) EXPECT_EQ(v, 1.0);
}

TEST(Decoder, ResolutionMismatchRejected) {
  const ModelParams p(tiny());
  const auto py = encode(p, random_image(32, 32, 13));
  EXPECT_THROW(decode_deltas(p, transform(p, py, py), d::Tensor::zeros({3, 40, 32})), std::invalid_argument);
}

TEST(Decoder, SumGradientPassesCheck) {
  const ModelParams p(tiny(2, false));
  const auto py = encode(p, random_image(16, 16, 14));
  const auto fused = transform(p, py, py);
  const auto prior = to_tensor(random_image(16, 16, 15, 0.2, 0.4));
  const d::Tensor feats = fused.features.detach();
  d::GradCheckOptions o;
  o.tolerance = 1e-3;
  const auto r = d::grad_check(
      [&] { return d::sum(decode_deltas(p, {feats, fused.height, fused.width}, prior).stylized); },
      p.with_prefix("dec."), o);
  EXPECT_TRUE(r.passed) << r.worst_param << " " << r.max_rel_error;
}

TEST(DomainDisc, ShapesAndDeterminism) {
  const ModelParams p(tiny());
  for (int s : {64, 128, 256}) {
    const auto img = to_tensor(random_image(s, s, static_cast<uint64_t>(s)));
    const auto a = domain_disc(p, img);
    EXPECT_EQ(a.shape(), (d::Shape{1, s / 8, s / 8}));
    EXPECT_TRUE(std::ranges::equal(a.data(), domain_disc(p, img).data()));
  }
}

TEST(DomainDisc, BceGradientPassesCheck) {
  const ModelParams p(tiny(2));
  const auto img = to_tensor(random_image(16, 16, 16));
  d::GradCheckOptions o;
  o.tolerance = 1e-3;
  const auto r = d::grad_check([&] { return losses::bce_real(domain_disc(p, img)); }, p.with_prefix("disc."), o);
  EXPECT_TRUE(r.passed) << r.worst_param << " " << r.max_rel_error;
}

TEST(PatchDisc, RefPermutationInvariant) {
  const ModelParams p(tiny());
  const auto cand = to_tensor(random_image(16, 16, 17));
  std::vector<d::Tensor> refs;
  for (uint64_t i = 0; i < 4; ++i) refs.push_back(to_tensor(random_image(16, 16, 20 + i)));
  const double a = patch_disc(p, PatchKind::kSimple, cand, refs).item();
  std::reverse(refs.begin(), refs.end());
  std::swap(refs[0], refs[2]);
  EXPECT_NEAR(patch_disc(p, PatchKind::kSimple, cand, refs).item(), a, 1e-12);
}

TEST(PatchDisc, ValidationAndIndependentRoutes) {
  const ModelParams p(tiny());
  const auto cand = to_tensor(random_image(16, 16, 18));
  EXPECT_THROW(patch_disc(p, PatchKind::kComplex, cand, {}), std::invalid_argument);
  EXPECT_THROW(patch_disc(p, PatchKind::kComplex, cand, {to_tensor(random_image(8, 8, 1))}), std::invalid_argument);
  EXPECT_NO_THROW(patch_disc(p, PatchKind::kComplex, cand, {cand}));
  EXPECT_NE(patch_disc(p, PatchKind::kSimple, cand, {cand}).item(), patch_disc(p, PatchKind::kComplex, cand, {cand}).item());
}

TEST(PatchDisc, GradientPassesCheck) {
  const ModelParams p(tiny(2));
  const auto cand = to_tensor(random_image(8, 8, 19));
  const std::vector<d::Tensor> refs{to_tensor(random_image(8, 8, 30)), to_tensor(random_image(8, 8, 31))};
  d::GradCheckOptions o;
  o.tolerance = 1e-3;
  const auto r = d::grad_check([&] { return patch_disc(p, PatchKind::kComplex, cand, refs); },
                               p.with_prefix("patch_complex."), o);
  EXPECT_TRUE(r.passed) << r.worst_param << " " << r.max_rel_error;
}

TEST(Projection, UnitNormAndDeterministic) {
  const ModelParams p(tiny());
  const auto py = encode(p, random_image(32, 32, 40));
  for (const auto& code : {project_style(p, py), project_content(p, py)}) {
    EXPECT_EQ(code.numel(), p.config().code_dim);
    EXPECT_NEAR(d::l2_norm(code).item(), 1.0, 1e-6);
  }
  const auto py2 = encode(p, random_image(32, 32, 40));
  EXPECT_TRUE(std::ranges::equal(project_style(p, py).data(), project_style(p, py2).data()));
}

TEST(Projection, StyleHeadMatchesHandMlp) {
  ModelParams p(tiny(1));
  // Width-1 pyramid with hand-set constant levels.
  FeaturePyramid py;
  const std::array<double, 4> vals{0.5, 1.0, 2.0, 3.0};
  for (int i = 0; i < 4; ++i) {
    const int64_t ch = int64_t{1} << i;
    const int64_t side = 16 >> i;
    std::vector<double> v(static_cast<size_t>(ch * side * side));
    for (size_t j = 0; j < v.size(); ++j) v[j] = vals[static_cast<size_t>(i)] + (j % 2 == 0 ? 0.25 : -0.25);
    py.levels[static_cast<size_t>(i)] = d::Tensor::from_data({ch, side, side}, v);
  }
  // Statistics: per channel mean = val, std = sqrt(0.0625 + 1e-8).
  std::vector<double> stats;
  for (int i = 0; i < 4; ++i) {
    const int ch = 1 << i;
    for (int c = 0; c < ch; ++c) stats.push_back(vals[static_cast<size_t>(i)]);
    for (int c = 0; c < ch; ++c) stats.push_back(std::sqrt(0.0625 + 1e-8));
  }
  ASSERT_EQ(stats.size(), 30u);
  auto affine = [](const Linear& l, const std::vector<double>& x) {
    const int64_t out = l.weight.dim(0), in = l.weight.dim(1);
    std::vector<double> y(static_cast<size_t>(out));
    for (int64_t a = 0; a < out; ++a) {
      double acc = l.bias.data()[static_cast<size_t>(a)];
      for (int64_t b = 0; b < in; ++b) acc += l.weight.data()[static_cast<size_t>(a * in + b)] * x[static_cast<size_t>(b)];
      y[static_cast<size_t>(a)] = acc;
    }
    return y;
  };
  auto hidden = affine(p.style_head.hidden, stats);
  for (auto& h : hidden) h = h > 0 ? h : 0.2 * h;
  auto code = affine(p.style_head.out, hidden);
  double norm = 0.0;
  for (double c : code) norm += c * c;
  norm = std::sqrt(norm);
  const auto got = project_style(p, py);
  for (size_t i = 0; i < code.size(); ++i) EXPECT_NEAR(got.data()[i], code[i] / (norm + 1e-12), 1e-12);
}

TEST(Params, CloneIsIndependent) {
  const ModelParams p(tiny());
  ModelParams q = p.clone();
  q.decoder.ups[0].weight.mutable_data()[0] += 1.0;
  EXPECT_NE(q.decoder.ups[0].weight.data()[0], p.decoder.ups[0].weight.data()[0]);
  const auto snap = p.snapshot();
  ModelParams alias = p;
  alias.decoder.ups[0].bias.mutable_data()[0] += 1.0;
  EXPECT_EQ(p.decoder.ups[0].bias.data()[0], alias.decoder.ups[0].bias.data()[0]);
  alias.restore(snap);
  EXPECT_EQ(p.snapshot(), snap);
}

TEST(Params, SeedControlsInitialization) {
  const ModelParams a(tiny()), b(tiny());
  EXPECT_EQ(a.snapshot(), b.snapshot());
  NetConfig other = tiny();
  other.seed = 4;
  EXPECT_NE(ModelParams(other).snapshot(), a.snapshot());
}

}  // namespace
}  // namespace neat::nets
