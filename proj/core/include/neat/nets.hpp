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
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "neat/checkpoint.hpp"
#include "neat/diff.hpp"
#include "neat/grad_check.hpp"
#include "neat/image.hpp"

namespace neat::nets {

using diff::Tensor;

inline constexpr int kPyramidLevels = 4;
inline constexpr int kTransformBlocks = 4;
/// Index of the level used by the content loss.
inline constexpr int kContentLevel = 3;
/// Index of the stride-2 level used by the single-image Frechet metric.
inline constexpr int kMetricLevel = 1;

struct NetConfig {
  int base_width = 16;        // encoder widths are c, 2c, 4c, 8c
  int fused_width = 0;        // transform width; 0 selects 8c
  int attention_dim = 0;      // query/key width; 0 selects 4c
  int disc_width = 0;         // discriminator base width; 0 selects c
  int head_hidden = 64;
  int code_dim = 32;
  bool zero_init_decoder_head = true;
  uint64_t seed = 0;

  int fused() const { return fused_width > 0 ? fused_width : 8 * base_width; }
  int attn() const { return attention_dim > 0 ? attention_dim : 4 * base_width; }
  int disc() const { return disc_width > 0 ? disc_width : base_width; }
  void validate() const;
};

/// Per-level encoder activations at strides 1, 2, 4, 8.
struct FeaturePyramid {
  std::array<Tensor, kPyramidLevels> levels;
  const Tensor& operator[](int i) const { return levels[static_cast<size_t>(i)]; }
};

struct Conv {
  Tensor weight;  // [O,C,k,k]
  Tensor bias;    // [O]
  int stride = 1;
  int pad = 0;
  diff::PadMode mode = diff::PadMode::kZero;
  Tensor operator()(const Tensor& x) const;
};

struct Linear {
  Tensor weight;  // [out,in]
  Tensor bias;    // [out]
  /// x: [in] -> [out]; or [in,N] -> [out,N] applied column-wise.
  Tensor operator()(const Tensor& x) const;
};

struct Encoder {
  std::array<Conv, 3> downs;  // between stages, stride 2
  std::array<std::array<Conv, 2>, kPyramidLevels> stages;
};

struct AttentionBlock {
  Linear query, key, value, out;
};

struct Transform {
  Linear fuse;  // pooled pyramid -> fused width
  std::array<AttentionBlock, kTransformBlocks> blocks;
};

struct Decoder {
  std::array<Conv, 3> ups;  // each preceded by nearest 2x upsampling
  Conv head;                // -> 3 channels, tanh
};

struct DomainDiscriminator {
  std::array<Conv, 3> convs;
  Conv out;
};

struct PatchDiscriminator {
  std::array<Conv, 3> convs;
  Linear hidden, out;
};

struct ProjectionHead {
  Linear hidden, out;
};

/// Fused feature map at the content level: [fused_width, H/8, W/8].
struct FusedFeatures {
  Tensor features;
  int64_t height = 0;
  int64_t width = 0;
};

struct DecodeResult {
  Tensor delta;     // [3,H,W] in [-1,1]
  Tensor stylized;  // clamp(prior + delta, 0, 1)
};

enum class PatchKind { kSimple, kComplex };

/// All learned state. Tensors are shared handles; copying a ModelParams
/// aliases the same arrays (use snapshot()/restore() for value copies).
class ModelParams {
 public:
  explicit ModelParams(const NetConfig& cfg = {});

  const NetConfig& config() const { return cfg_; }

  Encoder encoder;
  Transform transform;
  Decoder decoder;
  DomainDiscriminator domain_disc;
  PatchDiscriminator patch_simple;
  PatchDiscriminator patch_complex;
  ProjectionHead style_head;
  ProjectionHead content_head;

  const std::vector<diff::NamedTensor>& named() const { return named_; }
  std::vector<diff::NamedTensor> encoder_parameters() const;
  /// Transform, decoder and projection heads.
  std::vector<diff::NamedTensor> generator_parameters() const;
  /// Domain and both patch discriminators.
  std::vector<diff::NamedTensor> discriminator_parameters() const;
  std::vector<diff::NamedTensor> with_prefix(const std::string& prefix) const;

  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);
  /// Deep copy with independent arrays.
  ModelParams clone() const;
  void zero_grad();
  void zero_decoder_head();

 private:
  NetConfig cfg_;
  std::vector<diff::NamedTensor> named_;
};

FeaturePyramid encode(const ModelParams& p, const Tensor& image);
FeaturePyramid encode(const ModelParams& p, const Image& image);

/// Four residual cross-attention blocks refining the content features against
/// the style features at the content level.
FusedFeatures transform(const ModelParams& p, const FeaturePyramid& content, const FeaturePyramid& style);
/// Shallower levels pooled down to the content level, concatenated, and
/// projected to the fused width: [fused_width, N].
Tensor fuse_pyramid(const ModelParams& p, const FeaturePyramid& pyr);
/// Residual attention update F + out(softmax(q^T k / sqrt(d)) v) for one block;
/// content/style are [D,N] and [D,M].
Tensor attention_block(const AttentionBlock& block, const Tensor& content, const Tensor& style);
/// Per-row standardization of a [D,N] map.
Tensor channel_normalize(const Tensor& x);
/// softmax(q^T k * scale) applied to v: q [d,N], k [d,M], v [e,M] -> [e,N].
/// Without gradient tracking, large problems are processed in query bands.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, double scale);

DecodeResult decode_deltas(const ModelParams& p, const FusedFeatures& fused, const Tensor& prior);

/// Spatial logit map.
Tensor domain_disc(const ModelParams& p, const Tensor& image);
Tensor patch_code(const PatchDiscriminator& d, const Tensor& patch);
/// Scalar logit for a candidate patch given reference patches.
Tensor patch_disc(const ModelParams& p, PatchKind which, const Tensor& patch, const std::vector<Tensor>& refs);

Tensor project_style(const ModelParams& p, const FeaturePyramid& pyr);
Tensor project_content(const ModelParams& p, const FeaturePyramid& pyr);
/// Per-level channel (mean, std) statistics concatenated.
Tensor style_statistics(const FeaturePyramid& pyr);
Tensor l2_normalize(const Tensor& v);

// ---------------------------------------------------------------------------
// Serialization

Checkpoint to_checkpoint(const ModelParams& p);
NetConfig config_from_checkpoint(const Checkpoint& ckpt);
/// Copies arrays into `p`. Strict mode rejects entries that are neither model
/// parameters nor "meta."/"opt." records.
void load_into(ModelParams& p, const Checkpoint& ckpt, bool strict = true);

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path, bool strict = true);

/// Rounds to the nearest float32; parameters are stored at 32-bit precision.
double round_f32(double v);

}  // namespace neat::nets
