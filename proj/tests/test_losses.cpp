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

#include <cmath>
#include <numeric>

#include "neat/grad_check.hpp"
#include "neat/imgproc.hpp"
#include "neat/losses.hpp"
#include "neat/nets.hpp"
#include "test_util.hpp"

namespace neat::losses {
namespace {

namespace d = neat::diff;
using neat::testing::random_image;
using neat::testing::random_tensor;

nets::NetConfig tiny() {
  nets::NetConfig cfg;
  cfg.base_width = 2;
  cfg.head_hidden = 6;
  cfg.code_dim = 4;
  cfg.seed = 5;
  return cfg;
}

d::Tensor unit_rows(int64_t k, int64_t dim, uint64_t seed) {
  auto t = random_tensor({k, dim}, seed);
  auto v = t.mutable_data();
  for (int64_t r = 0; r < k; ++r) {
    double n = 0.0;
    for (int64_t c = 0; c < dim; ++c) n += v[static_cast<size_t>(r * dim + c)] * v[static_cast<size_t>(r * dim + c)];
    n = std::sqrt(n);
    for (int64_t c = 0; c < dim; ++c) v[static_cast<size_t>(r * dim + c)] /= n;
  }
  return t;
}

// Full similarity matrix, then explicit softmax cross-entropy per anchor row
// restricted to {positive} and the other-group columns.
double dense_info_nce(const d::Tensor& codes, const std::vector<int>& groups, const ContrastivePlan& plan, double tau) {
  const int64_t k = codes.dim(0), dim = codes.dim(1);
  std::vector<double> sim(static_cast<size_t>(k * k));
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (int64_t c = 0; c < dim; ++c) s += codes.data()[static_cast<size_t>(i * dim + c)] * codes.data()[static_cast<size_t>(j * dim + c)];
      sim[static_cast<size_t>(i * k + j)] = s / tau;
    }
  double total = 0.0;
  int used = 0;
  for (size_t i = 0; i < plan.anchors.size(); ++i) {
    const int a = plan.anchors[i], p = plan.positives[i];
    double denom = std::exp(sim[static_cast<size_t>(a * k + p)]);
    int negs = 0;
    for (int64_t j = 0; j < k; ++j)
      if (groups[static_cast<size_t>(j)] != groups[static_cast<size_t>(a)]) {
        denom += std::exp(sim[static_cast<size_t>(a * k + j)]);
        ++negs;
      }
    if (negs == 0) continue;
    total += -std::log(std::exp(sim[static_cast<size_t>(a * k + p)]) / denom);
    ++used;
  }
  return used ? total / used : 0.0;
}

TEST(TotalLoss, HandFixture) {
  LossWeights w;
  w.contrastive_style = 1.0;
  w.contrastive_content = 1.0;
  const auto r = total_loss({1, 2, 3, 4, 5, 6, 7, 8}, w, 3);
  EXPECT_EQ(r.total, 28.75);
  EXPECT_EQ(r.step, 3);
  EXPECT_EQ(r.terms[kPatchComplex], 8.0);
}

TEST(TotalLoss, ZeroWeightsAndLinearity) {
  LossWeights zero;
  zero.style = zero.adversarial = zero.content = zero.identity = 0.0;
  zero.contrastive_style = zero.contrastive_content = zero.patch_simple = zero.patch_complex = 0.0;
  const TermValues t{1.5, 0.2, 3.0, 40.0, 1.1, 0.9, 0.7, 0.6};
  EXPECT_EQ(total_loss(t, zero).total, 0.0);
  LossWeights w, w2;
  w2.style *= 2;
  w2.adversarial *= 2;
  w2.content *= 2;
  w2.identity *= 2;
  w2.contrastive_style *= 2;
  w2.contrastive_content *= 2;
  w2.patch_simple *= 2;
  w2.patch_complex *= 2;
  EXPECT_NEAR(total_loss(t, w2).total, 2 * total_loss(t, w).total, 1e-12);
}

TEST(TotalLoss, PatchWeightsDefault) {
  const LossWeights w;
  EXPECT_EQ(w.patch_simple, 0.25);
  EXPECT_EQ(w.patch_complex, 0.75);
  TermValues t{};
  t[kPatchSimple] = 2.0;
  t[kPatchComplex] = 4.0;
  EXPECT_EQ(total_loss(t, w).total, 0.25 * 2.0 + 0.75 * 4.0);
}

TEST(TotalLoss, NonFiniteTermNamed) {
  TermValues t{};
  t[kContent] = std::nan("");
  try {
    total_loss(t, LossWeights{});
    FAIL();
  } catch (const NonFiniteTermError& e) {
    EXPECT_EQ(e.term(), "content");
  }
}

TEST(TotalLoss, WeightedTotalMatchesScalarPath) {
  std::array<d::Tensor, kTermCount> terms;
  TermValues vals{};
  for (int i = 0; i < kTermCount; ++i) {
    vals[static_cast<size_t>(i)] = 0.5 + i;
    terms[static_cast<size_t>(i)] = d::Tensor::scalar(vals[static_cast<size_t>(i)]);
  }
  const LossWeights w;
  EXPECT_NEAR(weighted_total(terms, w).item(), total_loss(vals, w).total, 1e-12);
}

TEST(TotalLoss, WeightsValidated) {
  LossWeights w;
  w.temperature = 0.0;
  EXPECT_THROW(w.validate(), std::invalid_argument);
  w = LossWeights{};
  w.content = -1.0;
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

TEST(ReportCsv, HeaderAndRow) {
  EXPECT_EQ(report_csv_header(),
            "step,style,adversarial,content,identity,contrastive_style,contrastive_content,patch_simple,patch_complex,"
            "total");
  const auto row = report_csv_row(total_loss({1, 2, 3, 4, 5, 6, 7, 8}, LossWeights{}, 12));
  EXPECT_EQ(row.substr(0, 3), "12,");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 9);
}

TEST(StyleLoss, HandFixture) {
  // Channel 0: mean 1, std 1; channel 1: mean 0, std 2.
  const auto a = d::Tensor::from_data({2, 1, 2}, {0.0, 2.0, -2.0, 2.0});
  // Both channels: mean 0, std 1.
  const auto b = d::Tensor::from_data({2, 1, 2}, {-1.0, 1.0, 1.0, -1.0});
  const std::vector<d::Tensor> la{a}, lb{b};
  EXPECT_NEAR(style_loss(la, lb).item(), 2.0, 1e-6);
}

TEST(StyleLoss, ZeroOnIdenticalPyramidsAndNonNegative) {
  const nets::ModelParams p(tiny());
  const auto a = nets::encode(p, random_image(32, 32, 1));
  const auto b = nets::encode(p, random_image(32, 32, 2));
  EXPECT_EQ(style_loss(a, a).item(), 0.0);
  EXPECT_EQ(content_loss(a, a).item(), 0.0);
  EXPECT_GT(style_loss(a, b).item(), 0.0);
  const std::vector<d::Tensor> one{a[0]}, two{a[0], a[1]};
  EXPECT_THROW(style_loss(one, two), std::invalid_argument);
}

TEST(ContentLoss, AllOnesOffsetGivesSqrtN) {
  const auto a = random_tensor({3, 4, 5}, 3);
  const auto b = d::add_scalar(a, 1.0);
  EXPECT_NEAR(content_loss(a, b).item(), std::sqrt(60.0), 1e-12);
  EXPECT_EQ(content_loss(a, b).item(), content_loss(b, a).item());
  EXPECT_THROW(content_loss(a, random_tensor({3, 4, 4}, 4)), std::invalid_argument);
}

TEST(IdentityLoss, ZeroForPerfectReconstruction) {
  const nets::ModelParams p(tiny());
  const auto ic = to_tensor(random_image(16, 16, 5));
  const auto is = to_tensor(random_image(16, 16, 6));
  const auto pc = nets::encode(p, ic), ps = nets::encode(p, is);
  const IdentityInputs in{ic, ic, is, is, &pc, &pc, &ps, &ps};
  EXPECT_EQ(identity_loss(in, 50.0, 1.0).item(), 0.0);
}

TEST(IdentityLoss, UnitOffsetFixture) {
  const nets::ModelParams p(tiny());
  const auto ic = to_tensor(random_image(16, 16, 7));
  const auto is = to_tensor(random_image(16, 16, 8));
  const auto icc = d::add_scalar(ic, 1.0), iss = d::add_scalar(is, 1.0);
  const auto pc = nets::encode(p, ic), ps = nets::encode(p, is);
  const auto pcc = nets::encode(p, icc), pss = nets::encode(p, iss);
  const IdentityInputs in{icc, ic, iss, is, &pcc, &pc, &pss, &ps};
  double feature = 0.0;
  for (int i = 0; i < nets::kPyramidLevels; ++i) {
    for (auto [x, y] : {std::pair{&pcc, &pc}, std::pair{&pss, &ps}}) {
      double acc = 0.0;
      for (int64_t j = 0; j < (*x)[i].numel(); ++j) acc += std::pow((*x)[i].data()[static_cast<size_t>(j)] - (*y)[i].data()[static_cast<size_t>(j)], 2);
      feature += std::sqrt(acc);
    }
  }
  const double n = 3 * 16 * 16;
  EXPECT_NEAR(identity_loss(in, 50.0, 1.0).item(), 50.0 * 2 * std::sqrt(n) + feature, 1e-9);
  EXPECT_NEAR(identity_loss(in, 0.0, 1.0).item(), feature, 1e-9);
  EXPECT_NEAR(identity_loss(in, 1.0, 0.0).item(), 2 * std::sqrt(n), 1e-9);
}

TEST(Adversarial, HalfProbabilityFixture) {
  const auto zeros = d::Tensor::zeros({1, 4, 4});
  const auto r = adversarial_losses(zeros, zeros);
  EXPECT_NEAR(r.disc.item(), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(r.gen.item(), std::log(2.0), 1e-12);
}

TEST(Adversarial, PerfectDiscriminatorLimit) {
  const auto r = adversarial_losses(d::Tensor::full({1, 2, 2}, 40.0), d::Tensor::full({1, 2, 2}, -40.0));
  EXPECT_LT(r.disc.item(), 1e-12);
  EXPECT_GT(r.gen.item(), 39.0);
  EXPECT_TRUE(std::isfinite(adversarial_losses(d::Tensor::full({1}, 1e4), d::Tensor::full({1}, -1e4)).gen.item()));
}

TEST(Contrastive, HandSoftmaxCase) {
  // Anchor 0, positive 1 (similarity 1), one negative 2 (similarity 0).
  const auto codes = d::Tensor::from_data({3, 2}, {1, 0, 1, 0, 0, 1});
  const std::vector<int> groups{0, 0, 1};
  const ContrastivePlan plan{{0}, {1}};
  const auto r = info_nce(codes, groups, plan, 1.0);
  EXPECT_NEAR(r.loss.item(), -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
  EXPECT_NEAR(r.loss.item(), 0.3133, 1e-4);
  EXPECT_FALSE(r.degenerate);
}

TEST(Contrastive, IdenticalCodesGiveLogK) {
  const int k = 6;
  std::vector<double> v;
  for (int i = 0; i < k; ++i) v.insert(v.end(), {0.6, 0.8});
  const auto codes = d::Tensor::from_data({k, 2}, v);
  const std::vector<int> groups{0, 0, 1, 2, 3, 4};
  const auto r = info_nce(codes, groups, ContrastivePlan{{0}, {1}}, 0.2);
  EXPECT_NEAR(r.loss.item(), std::log(static_cast<double>(k - 1)), 1e-12);
}

TEST(Contrastive, SingleGroupIsDegenerate) {
  const auto codes = unit_rows(4, 3, 9);
  const std::vector<int> groups{0, 0, 0, 0};
  const std::vector<int> cand{0, 1, 2, 3};
  const auto r = info_nce(codes, groups, make_contrastive_plan(groups, cand, 1), 0.2);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.loss.item(), 0.0);
  const std::vector<int> singletons{0, 1, 2, 3};
  EXPECT_TRUE(make_contrastive_plan(singletons, cand, 1).anchors.empty());
  EXPECT_TRUE(info_nce(codes, singletons, make_contrastive_plan(singletons, cand, 1), 0.2).degenerate);
}

TEST(Contrastive, MatchesDenseOracleBothGroupings) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const int k = 4 + static_cast<int>(seed % 13);
    // Style-like grouping (pairs) and content-like grouping (triples).
    for (int gsize : {2, 3}) {
      std::vector<int> groups(static_cast<size_t>(k));
      for (int i = 0; i < k; ++i) groups[static_cast<size_t>(i)] = i / gsize;
      std::shuffle(groups.begin(), groups.end(), rng);
      std::vector<int> cand(static_cast<size_t>(k));
      std::iota(cand.begin(), cand.end(), 0);
      const auto codes = unit_rows(k, 5, seed * 7 + static_cast<uint64_t>(gsize));
      const auto plan = make_contrastive_plan(groups, cand, seed);
      for (size_t i = 0; i < plan.anchors.size(); ++i) {
        EXPECT_EQ(groups[static_cast<size_t>(plan.anchors[i])], groups[static_cast<size_t>(plan.positives[i])]);
        EXPECT_NE(plan.anchors[i], plan.positives[i]);
      }
      EXPECT_NEAR(info_nce(codes, groups, plan, 0.2).loss.item(), dense_info_nce(codes, groups, plan, 0.2), 1e-6);
    }
  }
}

TEST(Contrastive, PlanDeterministicPerSeed) {
  const std::vector<int> groups{0, 0, 0, 1, 1, 2, 2, 2};
  const std::vector<int> cand{0, 1, 2, 3, 4, 5, 6, 7};
  const auto a = make_contrastive_plan(groups, cand, 11);
  const auto b = make_contrastive_plan(groups, cand, 11);
  EXPECT_EQ(a.anchors, b.anchors);
  EXPECT_EQ(a.positives, b.positives);
}

TEST(Contrastive, RejectsBadPlan) {
  const auto codes = unit_rows(3, 2, 1);
  const std::vector<int> groups{0, 0, 1};
  EXPECT_THROW(info_nce(codes, groups, ContrastivePlan{{0}, {2}}, 0.2), std::invalid_argument);
  EXPECT_THROW(info_nce(codes, groups, ContrastivePlan{{0}, {1}}, 0.0), std::invalid_argument);
}

TEST(Contrastive, GradientPassesCheck) {
  auto codes = unit_rows(8, 4, 3);
  codes.set_requires_grad(true);
  const std::vector<int> groups{0, 0, 1, 1, 2, 2, 3, 3};
  const std::vector<int> cand{0, 1, 2, 3};
  const auto plan = make_contrastive_plan(groups, cand, 2);
  d::GradCheckOptions o;
  o.tolerance = 1e-5;
  const auto r = d::grad_check([&] { return info_nce(codes, groups, plan, 0.2).loss; }, {{"codes", codes}}, o);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

Image flat_noise(int h, int w, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  Image img(3, h, w, 0.5);
  for (int y = 0; y < h; ++y)
    for (int x = w / 2; x < w; ++x) {
      const double v = coin(rng) ? 1.0 : 0.0;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
    }
  return img;
}

TEST(PatchLoss, RoutingOnFlatNoiseFixture) {
  const nets::ModelParams p(tiny());
  const Image content = flat_noise(64, 64, 1);
  const Image style = random_image(64, 64, 2);
  const auto cs = imgproc::sobel_map(content), ss = imgproc::sobel_map(style);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const PatchInputs in{to_tensor(random_image(64, 64, 100 + seed)), to_tensor(style), to_tensor(style), &cs, &ss, &ss,
                         16, 8, seed};
    const auto r = patch_cooccurrence_loss(p, in);
    ASSERT_EQ(r.simple_scores.size(), 4u);
    ASSERT_EQ(r.complex_scores.size(), 4u);
    EXPECT_LE(*std::max_element(r.simple_scores.begin(), r.simple_scores.end()),
              *std::min_element(r.complex_scores.begin(), r.complex_scores.end()));
  }
}

TEST(PatchLoss, IdenticalSourcesIndistinguishable) {
  const nets::ModelParams p(tiny());
  const Image img = neat::testing::pattern_image(48, 48, 3);
  const auto t = to_tensor(img);
  const auto sm = imgproc::sobel_map(img);
  std::vector<double> diffs;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    const auto r = patch_cooccurrence_loss(p, PatchInputs{t, t, t, &sm, &sm, &sm, 16, 8, seed});
    diffs.push_back(r.fake_logit_mean - r.real_logit_mean);
  }
  const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / diffs.size();
  double var = 0.0;
  for (double x : diffs) var += (x - mean) * (x - mean);
  const double se = std::sqrt(var / (diffs.size() - 1) / diffs.size());
  EXPECT_LT(std::abs(mean), 3 * se);
}

TEST(PatchLoss, TooSmallImageRejected) {
  const nets::ModelParams p(tiny());
  const Image img = random_image(8, 8, 4);
  const auto sm = imgproc::sobel_map(img);
  const auto t = to_tensor(img);
  EXPECT_THROW(patch_cooccurrence_loss(p, PatchInputs{t, t, t, &sm, &sm, &sm, 16, 8, 0}), std::invalid_argument);
}

TEST(PatchLoss, GradientsFlowToStylizedAndDiscriminator) {
  const nets::ModelParams p(tiny());
  const Image style = random_image(16, 16, 5);
  const auto ss = imgproc::sobel_map(style);
  const Image content = random_image(16, 16, 6);
  const auto cs = imgproc::sobel_map(content);
  auto stylized = to_tensor(random_image(16, 16, 7), true);
  const auto st = to_tensor(style);
  d::GradCheckOptions o;
  o.tolerance = 1e-3;
  const auto gen = d::grad_check(
      [&] {
        const auto r = patch_cooccurrence_loss(p, PatchInputs{stylized, st, st, &cs, &ss, &ss, 8, 4, 1});
        return d::add(d::mul_scalar(r.gen_simple, 0.25), d::mul_scalar(r.gen_complex, 0.75));
      },
      {{"stylized", stylized}}, o);
  EXPECT_TRUE(gen.passed) << gen.max_rel_error;
  const auto disc = d::grad_check(
      [&] { return patch_cooccurrence_loss(p, PatchInputs{stylized.detach(), st, st, &cs, &ss, &ss, 8, 4, 1}).disc; },
      p.with_prefix("patch_simple."), o);
  EXPECT_TRUE(disc.passed) << disc.worst_param << " " << disc.max_rel_error;
}

}  // namespace
}  // namespace neat::losses
