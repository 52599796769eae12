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
#include <fstream>
#include <numeric>

#include "neat/losses.hpp"
#include "neat/nets.hpp"
#include "neat/train.hpp"
#include "test_util.hpp"

namespace neat::train {
namespace {

namespace d = neat::diff;
using neat::testing::pattern_image;
using neat::testing::TempDir;

TrainConfig small_config(int crop = 32, int batch = 4) {
  TrainConfig cfg;
  cfg.crop_size = crop;
  cfg.batch = batch;
  cfg.steps = 3;
  cfg.seed = 7;
  cfg.patch_size = 8;
  cfg.net.base_width = 2;
  cfg.net.head_hidden = 8;
  cfg.net.code_dim = 4;
  cfg.net.seed = 7;
  cfg.prior.bilateral_diameter = 5;
  return cfg;
}

Dataset small_dataset(int side, int n = 2) {
  Dataset data;
  for (int i = 0; i < n; ++i) {
    data.contents.push_back(pattern_image(side, side, 10 + static_cast<uint64_t>(i)));
    data.styles.push_back(pattern_image(side + 8, side + 8, 20 + static_cast<uint64_t>(i)));
  }
  return data;
}

void write_dataset(const TempDir& dir, int side) {
  std::ofstream cm(dir / "content.txt"), sm(dir / "style.txt");
  for (int i = 0; i < 2; ++i) {
    const std::string c = "c" + std::to_string(i) + ".png", s = "s" + std::to_string(i) + ".png";
    save_image(pattern_image(side, side, 10 + static_cast<uint64_t>(i)), dir / c);
    save_image(pattern_image(side, side + 16, 20 + static_cast<uint64_t>(i)), dir / s);
    cm << c << '\n';
    sm << s << '\n';
  }
}

std::vector<std::vector<double>> grads_of(const std::vector<d::NamedTensor>& ps) {
  std::vector<std::vector<double>> out;
  for (const auto& nt : ps) out.emplace_back(nt.tensor.grad().begin(), nt.tensor.grad().end());
  return out;
}

TEST(Config, ParsesKeysAndResolvesPaths) {
  const auto cfg = parse_train_config(
      "# comment\ncontent_manifest = data/c.txt\nstyle_manifest=/abs/s.txt\ncrop_size = 64\nbatch = 4\n"
      "learning_rate = 0.001  # trailing\nlambda_patch_complex = 0.5\nblur_enabled = false\nbase_width = 8\nseed = 3\n",
      "/base");
  EXPECT_EQ(cfg.content_manifest, std::filesystem::path("/base/data/c.txt"));
  EXPECT_EQ(cfg.style_manifest, std::filesystem::path("/abs/s.txt"));
  EXPECT_EQ(cfg.crop_size, 64);
  EXPECT_EQ(cfg.learning_rate, 0.001);
  EXPECT_EQ(cfg.weights.patch_complex, 0.5);
  EXPECT_FALSE(cfg.prior.blur_enabled);
  EXPECT_EQ(cfg.net.base_width, 8);
  EXPECT_EQ(cfg.net.seed, 3u);
}

TEST(Config, UnknownKeyNamesLine) {
  try {
    parse_train_config("crop_size = 64\nwarp_factor = 9\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("warp_factor"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  EXPECT_THROW(parse_train_config("crop_size = abc\n"), ConfigError);
  EXPECT_THROW(parse_train_config("crop_size\n"), ConfigError);
}

TEST(Config, FormatRoundTrips) {
  TrainConfig cfg = small_config();
  cfg.content_manifest = "/x/c.txt";
  cfg.style_manifest = "/x/s.txt";
  cfg.weights.temperature = 0.35;
  const auto back = parse_train_config(format_train_config(cfg));
  EXPECT_EQ(format_train_config(back), format_train_config(cfg));
  EXPECT_EQ(back.weights.temperature, 0.35);
}

TEST(Config, Validation) {
  TrainConfig cfg = small_config();
  cfg.crop_size = 60;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.batch = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.weights.temperature = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(TrainConfig{}.effective_patch_size(), 64);
}

TEST(Data, EmptyManifestRejected) {
  TempDir dir;
  std::ofstream(dir / "empty.txt") << "\n# nothing\n";
  EXPECT_THROW(load_manifest(dir / "empty.txt"), DataError);
  EXPECT_THROW(load_manifest(dir / "absent.txt"), DataError);
}

TEST(Data, LoadDatasetFitsShortSide) {
  TempDir dir;
  write_dataset(dir, 40);
  TrainConfig cfg = small_config();
  cfg.content_manifest = dir / "content.txt";
  cfg.style_manifest = dir / "style.txt";
  const Dataset data = load_dataset(cfg);
  ASSERT_EQ(data.contents.size(), 2u);
  EXPECT_EQ(data.contents[0].height, 32);
  EXPECT_EQ(data.styles[0].height, 32);
  EXPECT_EQ(data.styles[0].width, 45);
}

TEST(Data, PairLayoutReusesStyles) {
  EXPECT_EQ(pair_layout(2), (std::vector<std::pair<int, int>>{{0, 0}, {1, 1}}));
  const auto four = pair_layout(4);
  EXPECT_EQ(four, (std::vector<std::pair<int, int>>{{0, 0}, {1, 0}, {0, 1}, {1, 1}}));
  for (int b : {4, 6, 8}) {
    std::map<int, int> uses;
    for (const auto& [c, s] : pair_layout(b)) ++uses[s];
    for (const auto& [s, n] : uses) EXPECT_GE(n, 2);
  }
}

TEST(Data, BatchesDeterminedBySeedAndStep) {
  const Dataset data = small_dataset(40);
  const TrainConfig cfg = small_config();
  const Batch a = sample_batch(data, cfg, 5), b = sample_batch(data, cfg, 5), c = sample_batch(data, cfg, 6);
  EXPECT_EQ(a.contents, b.contents);
  EXPECT_EQ(a.styles, b.styles);
  EXPECT_EQ(a.styles_second, b.styles_second);
  EXPECT_TRUE(a.contents != c.contents || a.styles != c.styles);
  EXPECT_EQ(a.contents[0].height, 32);
  EXPECT_EQ(a.styles[0].width, 32);
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
}

struct AccumFixture {
  nets::ModelParams params;
  std::vector<nets::FeaturePyramid> pyramids;
  std::vector<int> groups;
  losses::ContrastivePlan plan;

  explicit AccumFixture(int macro) : params([] {
    nets::NetConfig cfg;
    cfg.base_width = 2;
    cfg.head_hidden = 8;
    cfg.code_dim = 4;
    cfg.seed = 1;
    return cfg;
  }()) {
    d::NoGradGuard ng;
    for (int i = 0; i < macro; ++i) {
      pyramids.push_back(nets::encode(params, neat::testing::random_image(16, 16, 50 + static_cast<uint64_t>(i))));
      groups.push_back(i % (macro / 2));
    }
    std::vector<int> cand(static_cast<size_t>(macro));
    std::iota(cand.begin(), cand.end(), 0);
    plan = losses::make_contrastive_plan(groups, cand, 9);
  }

  d::Tensor code(int i) const { return nets::project_style(params, pyramids[static_cast<size_t>(i)]); }
  d::Tensor loss(const d::Tensor& codes) const { return losses::info_nce(codes, groups, plan, 0.2).loss; }
};

TEST(LogitAccumulation, MatchesFullBatchGradients) {
  AccumFixture fx(8);
  const auto heads = fx.params.with_prefix("head_style.");
  for (const auto& nt : heads) nt.tensor.node().grad.clear();
  std::vector<d::Tensor> all;
  for (int i = 0; i < 8; ++i) all.push_back(fx.code(i));
  const auto direct = fx.loss(losses::stack_codes(all));
  direct.backward();
  const auto ref = grads_of(heads);
  double norm = 0.0;
  for (const auto& g : ref)
    for (double x : g) norm += x * x;
  ASSERT_GT(norm, 0.0);

  for (int sub : {1, 2, 4, 8}) {
    fx.params.zero_grad();
    const double value = logit_accumulated_contrastive([&](int i) { return fx.code(i); }, 8, sub,
                                                       [&](const d::Tensor& c) { return fx.loss(c); });
    EXPECT_NEAR(value, direct.item(), 1e-6 * std::abs(direct.item()));
    const auto got = grads_of(heads);
    for (size_t p = 0; p < ref.size(); ++p) {
      ASSERT_EQ(got[p].size(), ref[p].size()) << heads[p].name;
      for (size_t j = 0; j < ref[p].size(); ++j) {
        EXPECT_NEAR(got[p][j], ref[p][j], 1e-5 * std::max(1.0, std::abs(ref[p][j]))) << sub << " " << heads[p].name;
      }
    }
  }
}

TEST(LogitAccumulation, SurrogateCarriesSameGradient) {
  AccumFixture fx(8);
  const auto heads = fx.params.with_prefix("head_style.");
  fx.params.zero_grad();
  const auto acc = accumulate_codes([&](int i) { return fx.code(i); }, 8, 4, [&](const d::Tensor& c) { return fx.loss(c); });
  acc.surrogate.backward();
  const auto a = grads_of(heads);
  fx.params.zero_grad();
  logit_accumulated_contrastive([&](int i) { return fx.code(i); }, 8, 4, [&](const d::Tensor& c) { return fx.loss(c); });
  const auto b = grads_of(heads);
  for (size_t p = 0; p < a.size(); ++p)
    for (size_t j = 0; j < a[p].size(); ++j) EXPECT_NEAR(a[p][j], b[p][j], 1e-12);
}

TEST(LogitAccumulation, DivisibilityEnforced) {
  AccumFixture fx(8);
  auto code = [&](int i) { return fx.code(i); };
  auto loss = [&](const d::Tensor& c) { return fx.loss(c); };
  EXPECT_THROW(logit_accumulated_contrastive(code, 8, 3, loss), std::invalid_argument);
  EXPECT_THROW(accumulate_codes(code, 8, 0, loss), std::invalid_argument);
}

TEST(Adam, SkipsFrozenAndRoundsToFloat) {
  auto w = d::Tensor::from_data({2}, {0.5, -0.25}, true);
  auto frozen = d::Tensor::from_data({1}, {1.0}, false);
  d::sum(d::square(w)).backward();
  Adam opt(0.1);
  opt.step({{"w", w}, {"f", frozen}});
  EXPECT_EQ(frozen.data()[0], 1.0);
  // First Adam step moves each coordinate by lr against the gradient sign.
  EXPECT_NEAR(w.data()[0], 0.4, 1e-6);
  EXPECT_NEAR(w.data()[1], -0.15, 1e-6);
  for (double v : w.data()) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Trainer, SameSeedSameReports) {
  const Dataset data = small_dataset(32);
  const TrainConfig cfg = small_config();
  Trainer a(cfg, nets::ModelParams(cfg.net)), b(cfg, nets::ModelParams(cfg.net));
  for (int64_t s = 1; s <= 2; ++s) {
    const Batch batch = sample_batch(data, cfg, s);
    const auto ra = a.step(batch, s), rb = b.step(batch, s);
    EXPECT_EQ(ra.terms, rb.terms);
    EXPECT_EQ(ra.total, rb.total);
  }
  EXPECT_EQ(a.params().snapshot(), b.params().snapshot());
}

TEST(Trainer, ReportDecomposesIntoWeightedTerms) {
  const Dataset data = small_dataset(32);
  const TrainConfig cfg = small_config();
  Trainer t(cfg, nets::ModelParams(cfg.net));
  const auto r = t.evaluate(sample_batch(data, cfg, 1), 1);
  const auto lambdas = cfg.weights.lambdas();
  double sum = 0.0;
  for (int i = 0; i < losses::kTermCount; ++i) {
    EXPECT_TRUE(std::isfinite(r.terms[static_cast<size_t>(i)]));
    EXPECT_GE(r.terms[static_cast<size_t>(i)], 0.0) << losses::kTermNames[static_cast<size_t>(i)];
    sum += lambdas[static_cast<size_t>(i)] * r.terms[static_cast<size_t>(i)];
  }
  EXPECT_NEAR(r.total, sum, 1e-6 * std::abs(sum));
}

TEST(Trainer, DiscriminatorStepIsolatesGenerator) {
  const Dataset data = small_dataset(32);
  TrainConfig cfg = small_config();
  Trainer t(cfg, nets::ModelParams(cfg.net));
  auto values = [](const std::vector<d::NamedTensor>& ps) {
    std::vector<std::vector<double>> out;
    for (const auto& nt : ps) out.emplace_back(nt.tensor.data().begin(), nt.tensor.data().end());
    return out;
  };
  const auto gen_before = values(t.params().generator_parameters());
  const auto disc_before = values(t.params().discriminator_parameters());
  t.discriminator_step(sample_batch(data, cfg, 1), 1);
  EXPECT_EQ(values(t.params().generator_parameters()), gen_before);
  EXPECT_NE(values(t.params().discriminator_parameters()), disc_before);
}

TEST(Trainer, EncoderFrozenOverHundredSteps) {
  const Dataset data = small_dataset(32);
  TrainConfig cfg = small_config(32, 2);
  cfg.learning_rate = 1e-3;
  Trainer t(cfg, nets::ModelParams(cfg.net));
  std::vector<std::vector<double>> before;
  for (const auto& nt : t.params().encoder_parameters()) before.emplace_back(nt.tensor.data().begin(), nt.tensor.data().end());
  const auto gen_before = t.params().snapshot();
  for (int64_t s = 1; s <= 100; ++s) t.step(sample_batch(data, cfg, s), s);
  std::vector<std::vector<double>> after;
  for (const auto& nt : t.params().encoder_parameters()) after.emplace_back(nt.tensor.data().begin(), nt.tensor.data().end());
  EXPECT_EQ(before, after);
  EXPECT_NE(t.params().snapshot(), gen_before);
}

TEST(Trainer, NonFiniteStepRollsBack) {
  Dataset data = small_dataset(32);
  for (auto& v : data.contents[0].data) v = 1e200;
  const TrainConfig cfg = small_config(32, 2);
  Trainer t(cfg, nets::ModelParams(cfg.net));
  const auto before = t.params().snapshot();
  EXPECT_THROW(t.step(sample_batch(data, cfg, 1), 1), TrainStepError);
  EXPECT_EQ(t.params().snapshot(), before);
  EXPECT_EQ(t.completed_steps(), 0);
}

TEST(Fit, ResumeIsBitExact) {
  TempDir dir;
  write_dataset(dir, 32);
  TrainConfig cfg = small_config();
  cfg.content_manifest = dir / "content.txt";
  cfg.style_manifest = dir / "style.txt";
  cfg.steps = 3;
  cfg.checkpoint_every = 2;
  cfg.output_dir = dir / "full";
  const auto full = fit(cfg);
  EXPECT_EQ(full.reports.size(), 3u);
  ASSERT_TRUE(std::filesystem::exists(dir / "full" / "step_000002.neat"));

  TrainConfig resumed = cfg;
  resumed.output_dir = dir / "resumed";
  resumed.resume = dir / "full" / "step_000002.neat";
  const auto part = fit(resumed);
  ASSERT_EQ(part.reports.size(), 1u);
  EXPECT_EQ(part.reports[0].terms, full.reports[2].terms);
  EXPECT_EQ(part.reports[0].total, full.reports[2].total);

  const Checkpoint a = read_checkpoint(full.final_checkpoint), b = read_checkpoint(part.final_checkpoint);
  ASSERT_EQ(a.entries().size(), b.entries().size());
  for (size_t i = 0; i < a.entries().size(); ++i) {
    EXPECT_EQ(a.entries()[i].name, b.entries()[i].name);
    EXPECT_EQ(a.entries()[i].data, b.entries()[i].data) << a.entries()[i].name;
  }
  EXPECT_TRUE(a.contains("opt.gen.t"));
}

TEST(Fit, CsvRowPerStepAndConfigEcho) {
  TempDir dir;
  write_dataset(dir, 32);
  TrainConfig cfg = small_config(32, 2);
  cfg.content_manifest = dir / "content.txt";
  cfg.style_manifest = dir / "style.txt";
  cfg.steps = 2;
  cfg.output_dir = dir / "run";
  const auto r = fit(cfg);
  std::ifstream in(r.loss_csv);
  std::string line;
  int rows = 0;
  std::getline(in, line);
  EXPECT_EQ(line, losses::report_csv_header());
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2);
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "config.txt"));
  EXPECT_TRUE(std::filesystem::exists(r.final_checkpoint));
}

TEST(Fit, EmptyManifestIsStartupError) {
  TempDir dir;
  std::ofstream(dir / "empty.txt") << "";
  write_dataset(dir, 32);
  TrainConfig cfg = small_config();
  cfg.content_manifest = dir / "empty.txt";
  cfg.style_manifest = dir / "style.txt";
  cfg.output_dir = dir / "run";
  EXPECT_THROW(fit(cfg), DataError);
}

}  // namespace
}  // namespace neat::train
