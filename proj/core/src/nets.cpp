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

#include "neat/nets.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

namespace neat::nets {

namespace d = neat::diff;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMapRow = Eigen::Map<const RowMat>;
using MapRow = Eigen::Map<RowMat>;

// Attention problems above this many score entries are banded when no
// gradient is being recorded.
constexpr int64_t kDenseAttentionLimit = int64_t{1} << 22;

class Builder {
 public:
  Builder(uint64_t seed, std::vector<d::NamedTensor>& out) : rng_(seed), out_(out) {}

  Tensor make(const std::string& name, d::Shape shape, double stddev, bool trainable) {
    const auto n = static_cast<size_t>(d::shape_numel(shape));
    std::vector<double> v(n, 0.0);
    if (stddev > 0.0) {
      std::normal_distribution<double> dist(0.0, stddev);
      for (double& x : v) x = round_f32(dist(rng_));
    }
    Tensor t = Tensor::from_data(std::move(shape), std::move(v), trainable);
    out_.push_back({name, t});
    return t;
  }

  Conv conv(const std::string& name, int in, int out, int k, int stride, d::PadMode mode, bool trainable,
            double bias_std = 0.0, bool zero = false) {
    Conv c;
    const double std = zero ? 0.0 : std::sqrt(2.0 / (in * k * k));
    c.weight = make(name + ".weight", {out, in, k, k}, std, trainable);
    c.bias = make(name + ".bias", {out}, zero ? 0.0 : bias_std, trainable);
    c.stride = stride;
    c.pad = k / 2;
    c.mode = mode;
    return c;
  }

  Linear linear(const std::string& name, int in, int out, bool trainable, double gain = 2.0) {
    Linear l;
    l.weight = make(name + ".weight", {out, in}, std::sqrt(gain / in), trainable);
    l.bias = make(name + ".bias", {out}, 0.0, trainable);
    return l;
  }

 private:
  std::mt19937_64 rng_;
  std::vector<d::NamedTensor>& out_;
};

bool has_prefix(const std::string& s, const std::string& prefix) { return s.compare(0, prefix.size(), prefix) == 0; }

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  const int64_t rows = x.dim(0), cols = x.dim(1);
  return d::add(x, d::reshape(d::broadcast_channels(bias, 1, cols), {rows, cols}));
}

void check_pyramid(const FeaturePyramid& pyr, int base_width, const char* what) {
  for (int i = 0; i < kPyramidLevels; ++i) {
    const Tensor& t = pyr[i];
    if (!t.defined() || t.rank() != 3 || t.dim(0) != (int64_t{base_width} << i)) {
      throw std::invalid_argument(std::string(what) + ": pyramid level " + std::to_string(i) +
                                  " has unexpected shape " + (t.defined() ? d::shape_str(t.shape()) : "<undefined>"));
    }
    if (i > 0 && (pyr[i - 1].dim(1) != 2 * t.dim(1) || pyr[i - 1].dim(2) != 2 * t.dim(2))) {
      throw std::invalid_argument(std::string(what) + ": pyramid levels do not halve in size");
    }
  }
}

}  // namespace

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void NetConfig::validate() const {
  if (base_width < 1 || fused() < 1 || attn() < 1 || disc() < 1 || head_hidden < 1 || code_dim < 1) {
    throw std::invalid_argument("NetConfig: all widths must be positive");
  }
}

Tensor Conv::operator()(const Tensor& x) const { return d::conv2d(x, weight, bias, stride, pad, mode); }

Tensor Linear::operator()(const Tensor& x) const {
  if (x.rank() == 1) {
    const int64_t in = x.dim(0);
    Tensor y = d::matmul(weight, d::reshape(x, {in, 1}));
    return d::add(d::reshape(y, {weight.dim(0)}), bias);
  }
  return add_row_bias(d::matmul(weight, x), bias);
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams::ModelParams(const NetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Builder b(cfg_.seed, named_);
  const int c = cfg_.base_width;
  const auto reflect = d::PadMode::kReflect;
  const auto zero = d::PadMode::kZero;

  for (int s = 0; s < kPyramidLevels; ++s) {
    const int width = c << s;
    const std::string base = "enc.stage" + std::to_string(s);
    if (s > 0) {
      encoder.downs[static_cast<size_t>(s - 1)] =
          b.conv("enc.down" + std::to_string(s - 1), width / 2, width, 3, 2, reflect, false, 0.05);
    }
    const int in = s == 0 ? 3 : width;
    encoder.stages[static_cast<size_t>(s)][0] = b.conv(base + ".conv0", in, width, 3, 1, reflect, false, 0.05);
    encoder.stages[static_cast<size_t>(s)][1] = b.conv(base + ".conv1", width, width, 3, 1, reflect, false, 0.05);
  }

  const int fused = cfg_.fused();
  const int attn = cfg_.attn();
  transform.fuse = b.linear("tr.fuse", 15 * c, fused, true, 1.0);
  for (int i = 0; i < kTransformBlocks; ++i) {
    const std::string base = "tr.block" + std::to_string(i);
    auto& blk = transform.blocks[static_cast<size_t>(i)];
    blk.query = b.linear(base + ".query", fused, attn, true, 1.0);
    blk.key = b.linear(base + ".key", fused, attn, true, 1.0);
    blk.value = b.linear(base + ".value", fused, attn, true, 1.0);
    blk.out = b.linear(base + ".out", attn, fused, true, 0.25);
  }

  const std::array<int, 4> dec_widths{fused, 4 * c, 2 * c, c};
  for (int i = 0; i < 3; ++i) {
    decoder.ups[static_cast<size_t>(i)] =
        b.conv("dec.up" + std::to_string(i), dec_widths[static_cast<size_t>(i)], dec_widths[static_cast<size_t>(i + 1)], 3,
               1, reflect, true);
  }
  decoder.head = b.conv("dec.head", c, 3, 3, 1, reflect, true, 0.0, cfg_.zero_init_decoder_head);

  const int dw = cfg_.disc();
  auto make_disc_convs = [&](const std::string& base) {
    std::array<Conv, 3> convs;
    convs[0] = b.conv(base + ".conv0", 3, dw, 3, 2, zero, true);
    convs[1] = b.conv(base + ".conv1", dw, 2 * dw, 3, 2, zero, true);
    convs[2] = b.conv(base + ".conv2", 2 * dw, 4 * dw, 3, 2, zero, true);
    return convs;
  };
  domain_disc.convs = make_disc_convs("disc");
  domain_disc.out = b.conv("disc.out", 4 * dw, 1, 1, 1, zero, true);
  for (auto* pd : {&patch_simple, &patch_complex}) {
    const std::string base = pd == &patch_simple ? "patch_simple" : "patch_complex";
    pd->convs = make_disc_convs(base);
    pd->hidden = b.linear(base + ".hidden", 8 * dw, 4 * dw, true);
    pd->out = b.linear(base + ".out", 4 * dw, 1, true, 1.0);
  }

  style_head.hidden = b.linear("head_style.hidden", 30 * c, cfg_.head_hidden, true);
  style_head.out = b.linear("head_style.out", cfg_.head_hidden, cfg_.code_dim, true, 1.0);
  content_head.hidden = b.linear("head_content.hidden", 8 * c, cfg_.head_hidden, true);
  content_head.out = b.linear("head_content.out", cfg_.head_hidden, cfg_.code_dim, true, 1.0);
}

std::vector<d::NamedTensor> ModelParams::with_prefix(const std::string& prefix) const {
  std::vector<d::NamedTensor> out;
  for (const auto& nt : named_)
    if (has_prefix(nt.name, prefix)) out.push_back(nt);
  return out;
}

std::vector<d::NamedTensor> ModelParams::encoder_parameters() const { return with_prefix("enc."); }

std::vector<d::NamedTensor> ModelParams::generator_parameters() const {
  std::vector<d::NamedTensor> out;
  for (const auto& nt : named_)
    if (has_prefix(nt.name, "tr.") || has_prefix(nt.name, "dec.") || has_prefix(nt.name, "head_")) out.push_back(nt);
  return out;
}

std::vector<d::NamedTensor> ModelParams::discriminator_parameters() const {
  std::vector<d::NamedTensor> out;
  for (const auto& nt : named_)
    if (has_prefix(nt.name, "disc.") || has_prefix(nt.name, "patch_")) out.push_back(nt);
  return out;
}

std::vector<std::vector<double>> ModelParams::snapshot() const {
  std::vector<std::vector<double>> v;
  v.reserve(named_.size());
  for (const auto& nt : named_) v.emplace_back(nt.tensor.data().begin(), nt.tensor.data().end());
  return v;
}

void ModelParams::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != named_.size()) throw std::invalid_argument("restore: snapshot does not match parameter count");
  for (size_t i = 0; i < named_.size(); ++i) {
    Tensor t = named_[i].tensor;
    auto dst = t.mutable_data();
    if (values[i].size() != dst.size()) throw std::invalid_argument("restore: size mismatch for " + named_[i].name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

ModelParams ModelParams::clone() const {
  ModelParams copy(cfg_);
  copy.restore(snapshot());
  return copy;
}

void ModelParams::zero_grad() {
  for (auto& nt : named_) {
    Tensor t = nt.tensor;
    t.zero_grad();
  }
}

void ModelParams::zero_decoder_head() {
  for (Tensor t : {decoder.head.weight, decoder.head.bias}) {
    auto v = t.mutable_data();
    std::fill(v.begin(), v.end(), 0.0);
  }
}

// ---------------------------------------------------------------------------
// Forward passes

FeaturePyramid encode(const ModelParams& p, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("encode: expected a [3,H,W] image, got " + d::shape_str(image.shape()));
  }
  if (image.dim(1) % 8 != 0 || image.dim(2) % 8 != 0 || image.dim(1) < 8 || image.dim(2) < 8) {
    throw std::invalid_argument("encode: image size " + std::to_string(image.dim(1)) + "x" +
                                std::to_string(image.dim(2)) + " is not a positive multiple of 8");
  }
  FeaturePyramid pyr;
  Tensor x = image;
  for (int s = 0; s < kPyramidLevels; ++s) {
    if (s > 0) x = p.encoder.downs[static_cast<size_t>(s - 1)](x);
    const auto& st = p.encoder.stages[static_cast<size_t>(s)];
    x = d::relu(st[0](x));
    x = d::relu(st[1](x));
    pyr.levels[static_cast<size_t>(s)] = x;
  }
  return pyr;
}

FeaturePyramid encode(const ModelParams& p, const Image& image) { return encode(p, to_tensor(image)); }

Tensor fuse_pyramid(const ModelParams& p, const FeaturePyramid& pyr) {
  check_pyramid(pyr, p.config().base_width, "transform");
  const Tensor& top = pyr[kContentLevel];
  const int64_t n = top.dim(1) * top.dim(2);
  std::vector<Tensor> parts;
  for (int i = 0; i < kPyramidLevels; ++i) {
    const int k = 1 << (kContentLevel - i);
    parts.push_back(k > 1 ? d::avg_pool2d(pyr[i], k) : pyr[i]);
  }
  Tensor stacked = d::concat(parts, 0);
  return p.transform.fuse(d::reshape(stacked, {stacked.dim(0), n}));
}

Tensor channel_normalize(const Tensor& x) {
  const int64_t rows = x.dim(0), cols = x.dim(1);
  Tensor x3 = d::reshape(x, {rows, 1, cols});
  Tensor mu = d::broadcast_channels(d::channel_mean(x3), 1, cols);
  Tensor sd = d::broadcast_channels(d::channel_std(x3), 1, cols);
  return d::reshape(d::div(d::sub(x3, mu), sd), {rows, cols});
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, double scale) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(0) != k.dim(0) || k.dim(1) != v.dim(1)) {
    throw std::invalid_argument("attend: incompatible shapes " + d::shape_str(q.shape()) + ", " +
                                d::shape_str(k.shape()) + ", " + d::shape_str(v.shape()));
  }
  const int64_t dim = q.dim(0), n = q.dim(1), m = k.dim(1), e = v.dim(0);
  const bool tracking = d::grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  if (tracking || n * m <= kDenseAttentionLimit) {
    Tensor scores = d::mul_scalar(d::matmul(d::transpose(q), k), scale);
    Tensor weights = d::softmax(scores, 1);
    return d::matmul(v, d::transpose(weights));
  }

  // Banded evaluation: only a [band, M] slice of scores lives at a time.
  std::vector<double> out(static_cast<size_t>(e * n));
  MapRow out_m(out.data(), e, n);
  CMapRow qm(q.data().data(), dim, n), km(k.data().data(), dim, m), vm(v.data().data(), e, m);
  const int64_t band = std::max<int64_t>(1, kDenseAttentionLimit / m);
  RowMat scores;
  for (int64_t i0 = 0; i0 < n; i0 += band) {
    const int64_t rows = std::min(band, n - i0);
    scores.noalias() = qm.middleCols(i0, rows).transpose() * km;
    scores *= scale;
    for (int64_t r = 0; r < rows; ++r) {
      auto row = scores.row(r);
      const double mx = row.maxCoeff();
      row = (row.array() - mx).exp();
      row /= row.sum();
    }
    out_m.middleCols(i0, rows).noalias() = vm * scores.transpose();
  }
  return Tensor::from_data({e, n}, std::move(out));
}

Tensor attention_block(const AttentionBlock& block, const Tensor& content, const Tensor& style) {
  Tensor q = block.query(channel_normalize(content));
  Tensor k = block.key(channel_normalize(style));
  Tensor v = block.value(style);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.dim(0)));
  return d::add(content, block.out(attend(q, k, v, scale)));
}

FusedFeatures transform(const ModelParams& p, const FeaturePyramid& content, const FeaturePyramid& style) {
  Tensor f = fuse_pyramid(p, content);
  Tensor s = fuse_pyramid(p, style);
  for (const auto& blk : p.transform.blocks) f = attention_block(blk, f, s);
  return {f, content[kContentLevel].dim(1), content[kContentLevel].dim(2)};
}

DecodeResult decode_deltas(const ModelParams& p, const FusedFeatures& fused, const Tensor& prior) {
  const int64_t width = p.config().fused();
  if (fused.features.rank() != 2 || fused.features.dim(0) != width ||
      fused.features.dim(1) != fused.height * fused.width) {
    throw std::invalid_argument("decode_deltas: fused features have shape " + d::shape_str(fused.features.shape()));
  }
  if (prior.rank() != 3 || prior.dim(0) != 3 || prior.dim(1) != 8 * fused.height || prior.dim(2) != 8 * fused.width) {
    throw std::invalid_argument("decode_deltas: prior " + d::shape_str(prior.shape()) +
                                " does not match features at 1/8 resolution (" + std::to_string(fused.height) + "x" +
                                std::to_string(fused.width) + ")");
  }
  Tensor x = d::reshape(fused.features, {width, fused.height, fused.width});
  for (const auto& up : p.decoder.ups) x = d::relu(up(d::upsample_nearest2x(x)));
  Tensor delta = d::tanh(p.decoder.head(x));
  Tensor stylized = d::clamp(d::add(prior, delta), 0.0, 1.0);
  return {delta, stylized};
}

Tensor domain_disc(const ModelParams& p, const Tensor& image) {
  Tensor x = image;
  for (const auto& c : p.domain_disc.convs) x = d::leaky_relu(c(x), 0.2);
  return p.domain_disc.out(x);
}

Tensor patch_code(const PatchDiscriminator& disc, const Tensor& patch) {
  Tensor x = patch;
  for (const auto& c : disc.convs) x = d::leaky_relu(c(x), 0.2);
  return d::channel_mean(x);
}

Tensor patch_disc(const ModelParams& p, PatchKind which, const Tensor& patch, const std::vector<Tensor>& refs) {
  if (refs.empty()) throw std::invalid_argument("patch_disc: reference set is empty");
  for (const auto& r : refs) {
    if (r.shape() != patch.shape() || patch.rank() != 3 || patch.dim(1) != patch.dim(2)) {
      throw std::invalid_argument("patch_disc: patches must be square and equally sized, got " +
                                  d::shape_str(patch.shape()) + " and " + d::shape_str(r.shape()));
    }
  }
  const auto& disc = which == PatchKind::kSimple ? p.patch_simple : p.patch_complex;
  Tensor ref_sum = patch_code(disc, refs[0]);
  for (size_t i = 1; i < refs.size(); ++i) ref_sum = d::add(ref_sum, patch_code(disc, refs[i]));
  Tensor ref_mean = d::mul_scalar(ref_sum, 1.0 / static_cast<double>(refs.size()));
  Tensor joint = d::concat({patch_code(disc, patch), ref_mean}, 0);
  return disc.out(d::leaky_relu(disc.hidden(joint), 0.2));
}

Tensor l2_normalize(const Tensor& v) { return d::div(v, d::add_scalar(d::l2_norm(v), 1e-12)); }

Tensor style_statistics(const FeaturePyramid& pyr) {
  std::vector<Tensor> parts;
  for (const auto& lvl : pyr.levels) {
    parts.push_back(d::channel_mean(lvl));
    parts.push_back(d::channel_std(lvl));
  }
  return d::concat(parts, 0);
}

Tensor project_style(const ModelParams& p, const FeaturePyramid& pyr) {
  check_pyramid(pyr, p.config().base_width, "project_style");
  const auto& h = p.style_head;
  return l2_normalize(h.out(d::leaky_relu(h.hidden(style_statistics(pyr)), 0.2)));
}

Tensor project_content(const ModelParams& p, const FeaturePyramid& pyr) {
  check_pyramid(pyr, p.config().base_width, "project_content");
  const auto& h = p.content_head;
  return l2_normalize(h.out(d::leaky_relu(h.hidden(d::channel_mean(pyr[kContentLevel])), 0.2)));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

const std::array<std::pair<const char*, int NetConfig::*>, 6> kMetaFields{{
    {"meta.base_width", &NetConfig::base_width},
    {"meta.fused_width", &NetConfig::fused_width},
    {"meta.attention_dim", &NetConfig::attention_dim},
    {"meta.disc_width", &NetConfig::disc_width},
    {"meta.head_hidden", &NetConfig::head_hidden},
    {"meta.code_dim", &NetConfig::code_dim},
}};

}  // namespace

Checkpoint to_checkpoint(const ModelParams& p) {
  Checkpoint ckpt;
  NetConfig resolved = p.config();
  resolved.fused_width = resolved.fused();
  resolved.attention_dim = resolved.attn();
  resolved.disc_width = resolved.disc();
  for (const auto& [name, field] : kMetaFields) ckpt.add(name, {1}, {static_cast<float>(resolved.*field)});
  for (const auto& nt : p.named()) {
    std::vector<float> data(nt.tensor.data().begin(), nt.tensor.data().end());
    ckpt.add(nt.name, nt.tensor.shape(), std::move(data));
  }
  return ckpt;
}

NetConfig config_from_checkpoint(const Checkpoint& ckpt) {
  NetConfig cfg;
  for (const auto& [name, field] : kMetaFields) {
    const auto& e = ckpt.at(name);
    if (e.data.size() != 1) throw CheckpointError(CheckpointErrc::kShapeMismatch, name);
    cfg.*field = static_cast<int>(e.data[0]);
  }
  cfg.zero_init_decoder_head = false;
  return cfg;
}

void load_into(ModelParams& p, const Checkpoint& ckpt, bool strict) {
  std::unordered_map<std::string, Tensor> by_name;
  for (const auto& nt : p.named()) by_name.emplace(nt.name, nt.tensor);
  for (const auto& e : ckpt.entries()) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) {
      if (strict && !has_prefix(e.name, "meta.") && !has_prefix(e.name, "opt.")) {
        throw CheckpointError(CheckpointErrc::kUnknownEntry, e.name);
      }
      continue;
    }
    if (it->second.shape() != e.shape) {
      throw CheckpointError(CheckpointErrc::kShapeMismatch, e.name + " is " + d::shape_str(e.shape) +
                                                                ", model expects " + d::shape_str(it->second.shape()));
    }
  }
  for (const auto& nt : p.named()) {
    const auto* e = ckpt.find(nt.name);
    if (!e) {
      if (strict) throw CheckpointError(CheckpointErrc::kMissingEntry, nt.name);
      continue;
    }
    Tensor t = nt.tensor;
    auto dst = t.mutable_data();
    std::copy(e->data.begin(), e->data.end(), dst.begin());
  }
}

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) { write_checkpoint(to_checkpoint(p), path); }

ModelParams load_checkpoint(const std::filesystem::path& path, bool strict) {
  const Checkpoint ckpt = read_checkpoint(path);
  ModelParams p(config_from_checkpoint(ckpt));
  load_into(p, ckpt, strict);
  return p;
}

}  // namespace neat::nets
