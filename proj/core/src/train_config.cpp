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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "neat/train.hpp"

namespace neat::train {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("invalid value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean '" + v + "' for " + key);
}

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const std::string&, const std::filesystem::path&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

#define NEAT_INT_FIELD(name, member, type)                                                                 \
  Field {                                                                                                  \
    name, [](TrainConfig& c, const std::string& v, const std::filesystem::path&) {                         \
      c.member = parse_number<type>(name, v);                                                              \
    },                                                                                                     \
        [](const TrainConfig& c) { return std::to_string(c.member); }                                      \
  }
#define NEAT_REAL_FIELD(name, member)                                                                      \
  Field {                                                                                                  \
    name, [](TrainConfig& c, const std::string& v, const std::filesystem::path&) {                         \
      c.member = parse_number<double>(name, v);                                                            \
    },                                                                                                     \
        [](const TrainConfig& c) { return fmt(c.member); }                                                 \
  }
#define NEAT_PATH_FIELD(name, member)                                                                      \
  Field {                                                                                                  \
    name, [](TrainConfig& c, const std::string& v, const std::filesystem::path& base) {                    \
      std::filesystem::path p(v);                                                                          \
      c.member = p.is_relative() && !base.empty() ? base / p : p;                                          \
    },                                                                                                     \
        [](const TrainConfig& c) { return c.member.string(); }                                             \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields{
      NEAT_PATH_FIELD("content_manifest", content_manifest),
      NEAT_PATH_FIELD("style_manifest", style_manifest),
      NEAT_PATH_FIELD("output_dir", output_dir),
      NEAT_PATH_FIELD("resume", resume),
      NEAT_INT_FIELD("crop_size", crop_size, int),
      NEAT_INT_FIELD("batch", batch, int),
      NEAT_INT_FIELD("steps", steps, int64_t),
      NEAT_REAL_FIELD("learning_rate", learning_rate),
      NEAT_REAL_FIELD("beta1", beta1),
      NEAT_REAL_FIELD("beta2", beta2),
      NEAT_INT_FIELD("seed", seed, uint64_t),
      NEAT_INT_FIELD("accumulation_subbatch", accumulation_subbatch, int),
      NEAT_INT_FIELD("checkpoint_every", checkpoint_every, int64_t),
      NEAT_INT_FIELD("patch_size", patch_size, int),
      NEAT_INT_FIELD("patch_count", patch_count, int),
      NEAT_REAL_FIELD("lambda_style", weights.style),
      NEAT_REAL_FIELD("lambda_adversarial", weights.adversarial),
      NEAT_REAL_FIELD("lambda_content", weights.content),
      NEAT_REAL_FIELD("lambda_identity", weights.identity),
      NEAT_REAL_FIELD("lambda_contrastive_style", weights.contrastive_style),
      NEAT_REAL_FIELD("lambda_contrastive_content", weights.contrastive_content),
      NEAT_REAL_FIELD("lambda_patch_simple", weights.patch_simple),
      NEAT_REAL_FIELD("lambda_patch_complex", weights.patch_complex),
      NEAT_REAL_FIELD("lambda_identity_pixel", weights.identity_pixel),
      NEAT_REAL_FIELD("lambda_identity_feature", weights.identity_feature),
      NEAT_REAL_FIELD("temperature", weights.temperature),
      NEAT_INT_FIELD("blur_kernel", prior.blur_kernel, int),
      NEAT_REAL_FIELD("blur_sigma", prior.blur_sigma),
      Field{"blur_enabled",
            [](TrainConfig& c, const std::string& v, const std::filesystem::path&) {
              c.prior.blur_enabled = parse_bool("blur_enabled", v);
            },
            [](const TrainConfig& c) { return std::string(c.prior.blur_enabled ? "true" : "false"); }},
      NEAT_INT_FIELD("bilateral_diameter", prior.bilateral_diameter, int),
      NEAT_REAL_FIELD("bilateral_sigma", prior.bilateral_sigma),
      NEAT_REAL_FIELD("prior_weight", prior.prior_weight),
      NEAT_INT_FIELD("base_width", net.base_width, int),
      NEAT_INT_FIELD("head_hidden", net.head_hidden, int),
      NEAT_INT_FIELD("code_dim", net.code_dim, int),
  };
  return kFields;
}

#undef NEAT_INT_FIELD
#undef NEAT_REAL_FIELD
#undef NEAT_PATH_FIELD

}  // namespace

uint64_t derive_seed(uint64_t seed, int64_t step, uint32_t salt) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(step),
                    static_cast<uint32_t>(static_cast<uint64_t>(step) >> 32), salt};
  uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<uint64_t>(out[0]) << 32) | out[1];
}

namespace {

Image random_crop(const Image& img, int size, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> ys(0, img.height - size);
  std::uniform_int_distribution<int> xs(0, img.width - size);
  const int y = ys(rng);
  const int x = xs(rng);
  return imgproc::crop(img, y, x, size, size);
}

}  // namespace

void TrainConfig::validate() const {
  if (crop_size < 16 || crop_size % 8 != 0) {
    throw ConfigError("crop_size must be a multiple of 8 and at least 16, got " + std::to_string(crop_size));
  }
  if (batch < 2) throw ConfigError("batch must be at least 2, got " + std::to_string(batch));
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0,1)");
  if (accumulation_subbatch < 0) throw ConfigError("accumulation_subbatch must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  const int ps = effective_patch_size();
  if (ps < 8 || ps > crop_size) throw ConfigError("patch_size must lie in [8, crop_size], got " + std::to_string(ps));
  if (patch_count < 2 || patch_count % 2 != 0) throw ConfigError("patch_count must be even and >= 2");
  try {
    weights.validate();
    prior.validate();
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

TrainConfig parse_train_config(const std::string& text, const std::filesystem::path& base_dir) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& fs = fields();
    auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return key == f.key; });
    if (it == fs.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      it->set(cfg, value, base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.net.seed = cfg.seed;
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), path.parent_path());
}

std::string format_train_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::filesystem::path p(line);
    m.files.push_back(p.is_relative() ? m.base_dir / p : p);
  }
  if (m.files.empty()) throw DataError("manifest " + path.string() + " lists no images");
  return m;
}

Image fit_short_side(const Image& img, int side) {
  const int shorter = std::min(img.height, img.width);
  if (shorter == side) return img;
  const double scale = static_cast<double>(side) / shorter;
  const int h = std::max(side, static_cast<int>(std::lround(img.height * scale)));
  const int w = std::max(side, static_cast<int>(std::lround(img.width * scale)));
  return imgproc::resize_bilinear(img, h, w);
}

Dataset load_dataset(const TrainConfig& cfg) {
  Dataset data;
  auto load_all = [&](const std::filesystem::path& manifest, std::vector<Image>& out) {
    for (const auto& f : load_manifest(manifest).files) {
      if (!std::filesystem::exists(f)) throw DataError("missing image " + f.string());
      try {
        out.push_back(fit_short_side(load_image(f), cfg.crop_size));
      } catch (const ImageIoError& e) {
        throw DataError(e.what());
      }
    }
  };
  load_all(cfg.content_manifest, data.contents);
  load_all(cfg.style_manifest, data.styles);
  return data;
}

std::vector<std::pair<int, int>> pair_layout(int batch) {
  if (batch < 2) throw std::invalid_argument("pair_layout: batch must be >= 2");
  std::vector<std::pair<int, int>> pairs;
  if (batch < 4) {
    for (int i = 0; i < batch; ++i) pairs.emplace_back(i, i);
    return pairs;
  }
  for (int i = 0; i < batch; ++i) pairs.emplace_back(i % 2, i / 2);
  return pairs;
}

Batch sample_batch(const Dataset& data, const TrainConfig& cfg, int64_t step) {
  if (data.contents.empty() || data.styles.empty()) throw DataError("dataset is empty");
  Batch b;
  b.pairs = pair_layout(cfg.batch);
  int n_content = 0, n_style = 0;
  for (const auto& [c, s] : b.pairs) {
    n_content = std::max(n_content, c + 1);
    n_style = std::max(n_style, s + 1);
  }
  std::mt19937_64 rng(derive_seed(cfg.seed, step, 0x5eed));
  std::uniform_int_distribution<size_t> pick_c(0, data.contents.size() - 1);
  std::uniform_int_distribution<size_t> pick_s(0, data.styles.size() - 1);
  for (int i = 0; i < n_content; ++i) b.contents.push_back(random_crop(data.contents[pick_c(rng)], cfg.crop_size, rng));
  for (int i = 0; i < n_style; ++i) {
    const Image& src = data.styles[pick_s(rng)];
    b.styles.push_back(random_crop(src, cfg.crop_size, rng));
    b.styles_second.push_back(random_crop(src, cfg.crop_size, rng));
  }
  return b;
}

}  // namespace neat::train
