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

#include "neat/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace neat::train {

namespace d = neat::diff;
using losses::LossReport;

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<d::NamedTensor>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& nt : params) {
    Tensor t = nt.tensor;
    if (!t.requires_grad() || !t.has_grad()) continue;
    auto& st = state_[nt.name];
    const auto n = static_cast<size_t>(t.numel());
    if (st.m.empty()) {
      st.m.assign(n, 0.0);
      st.v.assign(n, 0.0);
    }
    auto g = t.grad();
    auto w = t.mutable_data();
    for (size_t i = 0; i < n; ++i) {
      st.m[i] = nets::round_f32(beta1_ * st.m[i] + (1.0 - beta1_) * g[i]);
      st.v[i] = nets::round_f32(beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i]);
      const double mhat = st.m[i] / c1;
      const double vhat = st.v[i] / c2;
      w[i] = nets::round_f32(w[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

void Adam::save(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.add(prefix + "t", {1}, {static_cast<float>(t_)});
  for (const auto& [name, st] : state_) {
    const auto n = static_cast<int64_t>(st.m.size());
    ckpt.add(prefix + name + ".m", {n}, std::vector<float>(st.m.begin(), st.m.end()));
    ckpt.add(prefix + name + ".v", {n}, std::vector<float>(st.v.begin(), st.v.end()));
  }
}

void Adam::load(const Checkpoint& ckpt, const std::string& prefix) {
  state_.clear();
  t_ = static_cast<int64_t>(ckpt.at(prefix + "t").data.at(0));
  for (const auto& e : ckpt.entries()) {
    if (e.name.compare(0, prefix.size(), prefix) != 0 || e.name.size() < prefix.size() + 3) continue;
    const std::string tail = e.name.substr(e.name.size() - 2);
    if (tail != ".m" && tail != ".v") continue;
    const std::string name = e.name.substr(prefix.size(), e.name.size() - prefix.size() - 2);
    auto& st = state_[name];
    (tail == ".m" ? st.m : st.v).assign(e.data.begin(), e.data.end());
  }
  for (const auto& [name, st] : state_) {
    if (st.m.size() != st.v.size()) throw CheckpointError(CheckpointErrc::kMissingEntry, prefix + name + " moments");
  }
}

// ---------------------------------------------------------------------------

TrainStepError::TrainStepError(std::string term, const std::string& detail)
    : std::runtime_error("training step aborted on '" + term + "': " + detail), term_(std::move(term)) {}

namespace {

class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<d::NamedTensor> params) : params_(std::move(params)) {
    for (auto& nt : params_) {
      flags_.push_back(nt.tensor.requires_grad());
      nt.tensor.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (size_t i = 0; i < params_.size(); ++i) params_[i].tensor.set_requires_grad(flags_[i]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<d::NamedTensor> params_;
  std::vector<bool> flags_;
};

void check_params_finite(const nets::ModelParams& p) {
  for (const auto& nt : p.named()) {
    for (double v : nt.tensor.data()) {
      if (!std::isfinite(v)) throw losses::NonFiniteTermError("parameter " + nt.name, v);
    }
  }
}

Tensor accumulate(const Tensor& acc, const Tensor& term) { return acc.defined() ? d::add(acc, term) : term; }

void zero_grads(const std::vector<d::NamedTensor>& params) {
  for (auto nt : params) nt.tensor.zero_grad();
}

}  // namespace

// ---------------------------------------------------------------------------
// Trainer

struct Trainer::Forward {
  std::vector<std::pair<int, int>> pairs;
  std::vector<Tensor> ic, is, is2;
  std::vector<nets::FeaturePyramid> ic_py, is_py, is2_py;
  std::vector<imgproc::SobelMap> ic_sobel, is_sobel, is2_sobel;
  std::vector<Tensor> icc, iss;
  std::vector<nets::FeaturePyramid> icc_py, iss_py;
  std::vector<Tensor> isc;
  std::vector<nets::FeaturePyramid> isc_py;
};

Trainer::Trainer(const TrainConfig& cfg, nets::ModelParams params)
    : cfg_(cfg),
      params_(std::move(params)),
      gen_opt_(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps),
      disc_opt_(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps) {
  cfg_.validate();
}

Trainer::Forward Trainer::forward(const Batch& batch, bool with_identity) const {
  if (batch.pairs.empty() || batch.contents.empty() || batch.styles.empty() ||
      batch.styles_second.size() != batch.styles.size()) {
    throw std::invalid_argument("training batch is incomplete");
  }
  Forward fw;
  fw.pairs = batch.pairs;
  const auto& p = params_;
  auto stylize = [&](const Image& prior, const nets::FeaturePyramid& style_py) {
    Tensor prior_t = to_tensor(prior);
    nets::FusedFeatures fused = nets::transform(p, nets::encode(p, prior_t), style_py);
    return nets::decode_deltas(p, fused, prior_t).stylized;
  };

  for (const auto& img : batch.contents) {
    fw.ic.push_back(to_tensor(img));
    fw.ic_py.push_back(nets::encode(p, fw.ic.back()));
    fw.ic_sobel.push_back(imgproc::sobel_map(img));
  }
  for (size_t s = 0; s < batch.styles.size(); ++s) {
    fw.is.push_back(to_tensor(batch.styles[s]));
    fw.is_py.push_back(nets::encode(p, fw.is.back()));
    fw.is_sobel.push_back(imgproc::sobel_map(batch.styles[s]));
    fw.is2.push_back(to_tensor(batch.styles_second[s]));
    fw.is2_py.push_back(nets::encode(p, fw.is2.back()));
    fw.is2_sobel.push_back(imgproc::sobel_map(batch.styles_second[s]));
  }
  for (const auto& [c, s] : batch.pairs) {
    const Image prior = imgproc::build_prior(batch.contents[static_cast<size_t>(c)],
                                             batch.styles[static_cast<size_t>(s)], cfg_.prior);
    fw.isc.push_back(stylize(prior, fw.is_py[static_cast<size_t>(s)]));
    fw.isc_py.push_back(nets::encode(p, fw.isc.back()));
  }
  if (with_identity) {
    for (size_t c = 0; c < batch.contents.size(); ++c) {
      const Image prior = imgproc::build_prior(batch.contents[c], batch.contents[c], cfg_.prior);
      fw.icc.push_back(stylize(prior, fw.ic_py[c]));
      fw.icc_py.push_back(nets::encode(p, fw.icc.back()));
    }
    for (size_t s = 0; s < batch.styles.size(); ++s) {
      const Image prior = imgproc::build_prior(batch.styles[s], batch.styles[s], cfg_.prior);
      fw.iss.push_back(stylize(prior, fw.is_py[s]));
      fw.iss_py.push_back(nets::encode(p, fw.iss.back()));
    }
  }
  return fw;
}

double Trainer::run_discriminator(const Forward& fw, int64_t step_index) {
  const auto& w = cfg_.weights;
  const bool domain = w.adversarial > 0.0;
  const bool patch = w.patch_simple + w.patch_complex > 0.0;
  if (!domain && !patch) return 0.0;

  const auto disc_params = params_.discriminator_parameters();
  zero_grads(disc_params);
  Tensor total;
  for (size_t i = 0; i < fw.pairs.size(); ++i) {
    const auto c = static_cast<size_t>(fw.pairs[i].first);
    const auto s = static_cast<size_t>(fw.pairs[i].second);
    const Tensor fake = fw.isc[i].detach();
    if (domain) {
      total = accumulate(total, losses::adversarial_losses(nets::domain_disc(params_, fw.is[s]),
                                                           nets::domain_disc(params_, fake))
                                    .disc);
    }
    if (patch) {
      losses::PatchInputs in{fake,
                             fw.is[s],
                             fw.is2[s],
                             &fw.ic_sobel[c],
                             &fw.is_sobel[s],
                             &fw.is2_sobel[s],
                             cfg_.effective_patch_size(),
                             cfg_.patch_count,
                             derive_seed(cfg_.seed, step_index, 100 + static_cast<uint32_t>(i))};
      total = accumulate(total, losses::patch_cooccurrence_loss(params_, in).disc);
    }
  }
  total = d::mul_scalar(total, 1.0 / static_cast<double>(fw.pairs.size()));
  const double value = total.item();
  if (!std::isfinite(value)) throw losses::NonFiniteTermError("discriminator", value);
  total.backward();
  disc_opt_.step(disc_params);
  return value;
}

std::array<Tensor, losses::kTermCount> Trainer::generator_terms(const Forward& fw, int64_t step_index, int sub,
                                                                 losses::TermValues& values) const {
  const auto& w = cfg_.weights;
  const size_t n_pairs = fw.pairs.size();
  const double inv = 1.0 / static_cast<double>(n_pairs);

  std::array<Tensor, losses::kTermCount> terms;
  std::vector<Tensor> id_content(fw.icc.size()), id_style(fw.iss.size());
  for (size_t c = 0; c < fw.icc.size(); ++c) {
    id_content[c] = losses::identity_term(fw.icc[c], fw.ic[c], fw.icc_py[c], fw.ic_py[c], w.identity_pixel,
                                          w.identity_feature);
  }
  for (size_t s = 0; s < fw.iss.size(); ++s) {
    id_style[s] = losses::identity_term(fw.iss[s], fw.is[s], fw.iss_py[s], fw.is_py[s], w.identity_pixel,
                                        w.identity_feature);
  }

  Tensor style, adv, content, identity, patch_simple, patch_complex;
  for (size_t i = 0; i < n_pairs; ++i) {
    const auto c = static_cast<size_t>(fw.pairs[i].first);
    const auto s = static_cast<size_t>(fw.pairs[i].second);
    style = accumulate(style, losses::style_loss(fw.isc_py[i], fw.is_py[s]));
    content = accumulate(content, losses::content_loss(fw.isc_py[i], fw.ic_py[c]));
    adv = accumulate(adv, losses::bce_real(nets::domain_disc(params_, fw.isc[i])));
    if (!id_content.empty()) identity = accumulate(identity, d::add(id_content[c], id_style[s]));
    losses::PatchInputs in{fw.isc[i],
                           fw.is[s],
                           fw.is2[s],
                           &fw.ic_sobel[c],
                           &fw.is_sobel[s],
                           &fw.is2_sobel[s],
                           cfg_.effective_patch_size(),
                           cfg_.patch_count,
                           derive_seed(cfg_.seed, step_index, 100 + static_cast<uint32_t>(i))};
    const auto pl = losses::patch_cooccurrence_loss(params_, in);
    patch_simple = accumulate(patch_simple, pl.gen_simple);
    patch_complex = accumulate(patch_complex, pl.gen_complex);
  }
  terms[losses::kStyle] = d::mul_scalar(style, inv);
  terms[losses::kContent] = d::mul_scalar(content, inv);
  terms[losses::kAdversarial] = d::mul_scalar(adv, inv);
  terms[losses::kIdentity] = identity.defined() ? d::mul_scalar(identity, inv) : Tensor::scalar(0.0);
  terms[losses::kPatchSimple] = d::mul_scalar(patch_simple, inv);
  terms[losses::kPatchComplex] = d::mul_scalar(patch_complex, inv);

  // Contrastive terms: stylized outputs anchor against ground-truth rows.
  std::vector<const nets::FeaturePyramid*> style_rows, content_rows;
  std::vector<int> style_groups, content_groups, anchors;
  for (size_t i = 0; i < n_pairs; ++i) {
    style_rows.push_back(&fw.isc_py[i]);
    style_groups.push_back(fw.pairs[i].second);
    content_rows.push_back(&fw.isc_py[i]);
    content_groups.push_back(fw.pairs[i].first);
    anchors.push_back(static_cast<int>(i));
  }
  for (size_t s = 0; s < fw.is.size(); ++s) {
    style_rows.push_back(&fw.is_py[s]);
    style_groups.push_back(static_cast<int>(s));
    style_rows.push_back(&fw.is2_py[s]);
    style_groups.push_back(static_cast<int>(s));
  }
  for (size_t c = 0; c < fw.ic.size(); ++c) {
    content_rows.push_back(&fw.ic_py[c]);
    content_groups.push_back(static_cast<int>(c));
  }
  auto contrastive = [&](const std::vector<const nets::FeaturePyramid*>& rows, const std::vector<int>& groups,
                         bool style_codes, uint32_t salt) {
    const auto plan = losses::make_contrastive_plan(groups, anchors, derive_seed(cfg_.seed, step_index, salt));
    const int count = static_cast<int>(rows.size());
    const int split = sub > 0 && sub < count && count % sub == 0 ? sub : count;
    return accumulate_codes(
        [&](int i) {
          const auto& py = *rows[static_cast<size_t>(i)];
          return style_codes ? nets::project_style(params_, py) : nets::project_content(params_, py);
        },
        count, split, [&](const Tensor& codes) { return losses::info_nce(codes, groups, plan, w.temperature).loss; });
  };
  const AccumulatedLoss cs = contrastive(style_rows, style_groups, true, 1);
  const AccumulatedLoss cc = contrastive(content_rows, content_groups, false, 2);
  terms[losses::kContrastiveStyle] = cs.surrogate;
  terms[losses::kContrastiveContent] = cc.surrogate;

  for (size_t k = 0; k < values.size(); ++k) values[k] = terms[k].item();
  values[losses::kContrastiveStyle] = cs.value;
  values[losses::kContrastiveContent] = cc.value;
  return terms;
}

LossReport Trainer::run_generator(const Forward& fw, int64_t step_index, bool update) {
  const auto& w = cfg_.weights;
  FreezeGuard freeze(params_.discriminator_parameters());
  losses::TermValues values{};
  const auto terms = generator_terms(fw, step_index, cfg_.accumulation_subbatch, values);
  const LossReport report = losses::total_loss(values, w, step_index);

  if (update) {
    const auto gen_params = params_.generator_parameters();
    zero_grads(gen_params);
    losses::weighted_total(terms, w).backward();
    gen_opt_.step(gen_params);
  }
  return report;
}

LossReport Trainer::step(const Batch& batch, int64_t step_index) {
  const auto snapshot = params_.snapshot();
  const Adam gen_saved = gen_opt_, disc_saved = disc_opt_;
  auto rollback = [&] {
    params_.restore(snapshot);
    gen_opt_ = gen_saved;
    disc_opt_ = disc_saved;
    params_.zero_grad();
  };
  try {
    const Forward fw = forward(batch, true);
    run_discriminator(fw, step_index);
    const LossReport report = run_generator(fw, step_index, true);
    check_params_finite(params_);
    params_.zero_grad();
    completed_ = step_index;
    return report;
  } catch (const losses::NonFiniteTermError& e) {
    rollback();
    throw TrainStepError(e.term(), e.what());
  } catch (const d::NonFiniteError& e) {
    rollback();
    throw TrainStepError(e.what(), e.what());
  }
}

double Trainer::discriminator_step(const Batch& batch, int64_t step_index) {
  Forward fw;
  {
    d::NoGradGuard no_grad;
    fw = forward(batch, false);
  }
  const double value = run_discriminator(fw, step_index);
  params_.zero_grad();
  return value;
}

Tensor Trainer::objective(const Batch& batch, int64_t step_index) {
  FreezeGuard freeze(params_.discriminator_parameters());
  losses::TermValues values{};
  const auto terms = generator_terms(forward(batch, true), step_index, 0, values);
  return losses::weighted_total(terms, cfg_.weights);
}

LossReport Trainer::evaluate(const Batch& batch, int64_t step_index) {
  d::NoGradGuard no_grad;
  return run_generator(forward(batch, true), step_index, false);
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt = nets::to_checkpoint(params_);
  gen_opt_.save(ckpt, "opt.gen.");
  disc_opt_.save(ckpt, "opt.disc.");
  ckpt.add("opt.completed_steps", {1}, {static_cast<float>(completed_)});
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  nets::load_into(params_, ckpt, true);
  gen_opt_.load(ckpt, "opt.gen.");
  disc_opt_.load(ckpt, "opt.disc.");
  completed_ = static_cast<int64_t>(ckpt.at("opt.completed_steps").data.at(0));
}

// ---------------------------------------------------------------------------
// Logit accumulation

namespace {

std::vector<Tensor> fixed_codes(const CodeFn& code_fn, int count) {
  d::NoGradGuard no_grad;
  std::vector<Tensor> codes;
  codes.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) codes.push_back(code_fn(i).detach());
  return codes;
}

void check_split(int count, int subbatch) {
  if (count < 1 || subbatch < 1 || count % subbatch != 0) {
    throw std::invalid_argument("logit accumulation: macro batch " + std::to_string(count) +
                                " is not divisible by subbatch " + std::to_string(subbatch));
  }
}

Tensor spliced_loss(const CodeFn& code_fn, const std::vector<Tensor>& fixed, int start, int subbatch,
                    const CodeLossFn& loss_fn) {
  std::vector<Tensor> rows = fixed;
  for (int i = start; i < start + subbatch; ++i) rows[static_cast<size_t>(i)] = code_fn(i);
  return loss_fn(losses::stack_codes(rows));
}

}  // namespace

AccumulatedLoss accumulate_codes(const CodeFn& code_fn, int count, int subbatch, const CodeLossFn& loss_fn) {
  check_split(count, subbatch);
  const auto fixed = fixed_codes(code_fn, count);
  AccumulatedLoss out;
  {
    d::NoGradGuard no_grad;
    out.value = loss_fn(losses::stack_codes(fixed)).item();
  }
  if (!d::grad_enabled()) {
    out.surrogate = Tensor::scalar(out.value);
    return out;
  }
  for (int s = 0; s < count; s += subbatch) {
    out.surrogate = accumulate(out.surrogate, spliced_loss(code_fn, fixed, s, subbatch, loss_fn));
  }
  return out;
}

double logit_accumulated_contrastive(const CodeFn& code_fn, int count, int subbatch, const CodeLossFn& loss_fn) {
  check_split(count, subbatch);
  const auto fixed = fixed_codes(code_fn, count);
  double value = 0.0;
  {
    d::NoGradGuard no_grad;
    value = loss_fn(losses::stack_codes(fixed)).item();
  }
  for (int s = 0; s < count; s += subbatch) spliced_loss(code_fn, fixed, s, subbatch, loss_fn).backward();
  return value;
}

// ---------------------------------------------------------------------------
// Driver

namespace {

std::filesystem::path checkpoint_name(const std::filesystem::path& dir, int64_t step) {
  std::ostringstream os;
  os << "step_" << std::setw(6) << std::setfill('0') << step << ".neat";
  return dir / os.str();
}

/// Keeps the header and rows up to `last_step`, so a resumed run continues
/// the same file.
void truncate_csv(const std::filesystem::path& path, int64_t last_step) {
  std::ifstream in(path);
  std::vector<std::string> keep;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      keep.push_back(line);
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    if (std::stoll(line.substr(0, comma)) <= last_step) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace

FitResult fit(const TrainConfig& cfg, const std::function<void(const LossReport&)>& on_step) {
  cfg.validate();
  const Dataset data = load_dataset(cfg);

  std::filesystem::create_directories(cfg.output_dir);
  FitResult result;
  result.loss_csv = cfg.output_dir / "loss.csv";

  std::unique_ptr<Trainer> trainer;
  if (!cfg.resume.empty()) {
    if (!std::filesystem::exists(cfg.resume)) throw DataError("missing checkpoint " + cfg.resume.string());
    const Checkpoint ckpt = read_checkpoint(cfg.resume);
    trainer = std::make_unique<Trainer>(cfg, nets::ModelParams(nets::config_from_checkpoint(ckpt)));
    trainer->restore(ckpt);
  } else {
    nets::NetConfig net = cfg.net;
    net.seed = cfg.seed;
    trainer = std::make_unique<Trainer>(cfg, nets::ModelParams(net));
  }

  {
    std::ofstream echo(cfg.output_dir / "config.txt", std::ios::trunc);
    echo << format_train_config(cfg);
  }
  const int64_t start = trainer->completed_steps();
  if (start > 0 && std::filesystem::exists(result.loss_csv)) {
    truncate_csv(result.loss_csv, start);
  } else {
    std::ofstream(result.loss_csv, std::ios::trunc) << losses::report_csv_header() << '\n';
  }
  std::ofstream csv(result.loss_csv, std::ios::app);
  if (!csv) throw DataError("cannot write " + result.loss_csv.string());

  for (int64_t step = start + 1; step <= cfg.steps; ++step) {
    const LossReport report = trainer->step(sample_batch(data, cfg, step), step);
    csv << losses::report_csv_row(report) << '\n' << std::flush;
    result.reports.push_back(report);
    if (on_step) on_step(report);
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) {
      write_checkpoint(trainer->checkpoint(), checkpoint_name(cfg.output_dir, step));
    }
  }
  result.final_checkpoint = cfg.output_dir / "final.neat";
  write_checkpoint(trainer->checkpoint(), result.final_checkpoint);
  return result;
}

}  // namespace neat::train
