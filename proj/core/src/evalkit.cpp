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

#include "neat/evalkit.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <new>
#include <numeric>
#include <random>
#include <sstream>

#include "neat/imgproc.hpp"

namespace neat::evalkit {

namespace d = neat::diff;

namespace {

using Points = std::vector<std::array<double, 3>>;

Points rgb_points(const Image& img, int64_t sample, uint64_t seed) {
  if (img.channels != 3) throw std::invalid_argument("chamfer_color: expected an RGB image");
  const auto n = static_cast<int64_t>(img.pixels());
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (sample > 0 && n > sample) {
    std::mt19937_64 rng(seed);
    for (int64_t i = 0; i < sample; ++i) {
      std::uniform_int_distribution<int64_t> pick(i, n - 1);
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(pick(rng))]);
    }
    idx.resize(static_cast<size_t>(sample));
  }
  const auto plane = img.pixels();
  Points pts;
  pts.reserve(idx.size());
  for (int64_t i : idx) {
    const auto k = static_cast<size_t>(i);
    pts.push_back({img.data[k] * 255.0, img.data[plane + k] * 255.0, img.data[2 * plane + k] * 255.0});
  }
  return pts;
}

double one_sided(const Points& from, const Points& to) {
  double total = 0.0;
  for (const auto& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : to) {
      const double dr = a[0] - b[0], dg = a[1] - b[1], db = a[2] - b[2];
      best = std::min(best, dr * dr + dg * dg + db * db);
    }
    total += best;
  }
  return total / static_cast<double>(from.size());
}

Image at_working_size(const Image& img) {
  const auto ws = infer::working_size(img.height, img.width, 0);
  if (ws.height == img.height && ws.width == img.width) return img;
  return imgproc::resize_bilinear(img, ws.height, ws.width);
}

Eigen::MatrixXd level_matrix(const d::Tensor& t) {
  const auto c = t.dim(0), n = t.dim(1) * t.dim(2);
  Eigen::MatrixXd m(c, n);
  const auto data = t.data();
  for (int64_t i = 0; i < c; ++i)
    for (int64_t j = 0; j < n; ++j) m(i, j) = data[static_cast<size_t>(i * n + j)];
  return m;
}

Image synthetic_image(int height, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double fx = 2.0 + 6.0 * u(rng), fy = 2.0 + 6.0 * u(rng);
  Image img(3, height, width);
  for (int c = 0; c < 3; ++c) {
    const double phase = 6.28 * u(rng);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double wave = 0.5 + 0.35 * std::sin(fx * x / width * 6.28 + fy * y / height * 6.28 + phase);
        img.at(c, y, x) = std::clamp(wave + 0.1 * (u(rng) - 0.5), 0.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace

double chamfer_color(const Image& a, const Image& b, int64_t sample, uint64_t seed) {
  const Points pa = rgb_points(a, sample, seed);
  const Points pb = rgb_points(b, sample, seed + 1);
  if (pa.empty() || pb.empty()) throw std::invalid_argument("chamfer_color: empty image");
  return one_sided(pa, pb) + one_sided(pb, pa);
}

GaussianMoments gaussian_moments(const Eigen::MatrixXd& samples) {
  if (samples.cols() < 2) {
    throw std::invalid_argument("feature statistics need at least 2 spatial positions, got " +
                                std::to_string(samples.cols()));
  }
  GaussianMoments m;
  m.mean = samples.rowwise().mean();
  const Eigen::MatrixXd centered = samples.colwise() - m.mean;
  m.covariance = centered * centered.transpose() / static_cast<double>(samples.cols() - 1);
  return m;
}

double frechet_distance(const GaussianMoments& a, const GaussianMoments& b) {
  if (a.mean.size() != b.mean.size()) throw std::invalid_argument("frechet_distance: dimension mismatch");
  const Eigen::MatrixXd sa = imgproc::sqrtm_psd(a.covariance);
  Eigen::MatrixXd inner = sa * b.covariance * sa;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) tr_sqrt += std::sqrt(std::max(0.0, es.eigenvalues()(i)));
  const double value =
      (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, value);
}

GaussianMoments metric_features(const Image& img, const nets::ModelParams& p) {
  d::NoGradGuard no_grad;
  const auto py = nets::encode(p, at_working_size(img));
  return gaussian_moments(level_matrix(py[nets::kMetricLevel]));
}

double sifid(const Image& a, const Image& b, const nets::ModelParams& p) {
  return frechet_distance(metric_features(a, p), metric_features(b, p));
}

double content_proxy(const Image& content, const Image& stylized, const nets::ModelParams& p) {
  d::NoGradGuard no_grad;
  const Image c = at_working_size(content);
  Image s = stylized;
  if (s.height != c.height || s.width != c.width) s = imgproc::resize_bilinear(s, c.height, c.width);
  const auto pc = nets::encode(p, c);
  const auto ps = nets::encode(p, s);
  double total = 0.0;
  for (int l = 0; l < nets::kPyramidLevels; ++l) {
    Eigen::MatrixXd fa = level_matrix(pc[l]);
    Eigen::MatrixXd fb = level_matrix(ps[l]);
    const Eigen::RowVectorXd na = fa.colwise().norm().array() + 1e-10;
    const Eigen::RowVectorXd nb = fb.colwise().norm().array() + 1e-10;
    fa = fa.array().rowwise() / na.array();
    fb = fb.array().rowwise() / nb.array();
    total += (fa - fb).colwise().squaredNorm().mean();
  }
  return total / nets::kPyramidLevels;
}

PairMetrics MetricReport::mean() const {
  PairMetrics m;
  m.content = "mean";
  if (pairs.empty()) return m;
  for (const auto& r : pairs) {
    m.chamfer += r.chamfer;
    m.sifid += r.sifid;
    m.content_proxy += r.content_proxy;
  }
  const double n = static_cast<double>(pairs.size());
  m.chamfer /= n;
  m.sifid /= n;
  m.content_proxy /= n;
  return m;
}

std::vector<std::pair<std::filesystem::path, std::filesystem::path>> read_pairs_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ImageIoError("cannot open pairs file " + path.string());
  const auto base = path.parent_path();
  auto resolve = [&](std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    std::filesystem::path p(s);
    return p.is_relative() ? base / p : p;
  };
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> pairs;
  std::string line;
  bool header = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (header) {
      header = false;
      continue;
    }
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected content_path,style_path");
    }
    pairs.emplace_back(resolve(line.substr(0, comma)), resolve(line.substr(comma + 1)));
  }
  return pairs;
}

PairMetrics evaluate_pair(const Image& content, const Image& style, const Image& stylized, const nets::ModelParams& p,
                          const EvalOptions& opts) {
  PairMetrics m;
  m.chamfer = chamfer_color(stylized, style, opts.chamfer_sample, opts.seed);
  m.sifid = sifid(stylized, style, p);
  m.content_proxy = content_proxy(content, stylized, p);
  return m;
}

MetricReport evaluate_pairs(const std::filesystem::path& pairs_csv, const nets::ModelParams& p,
                            const EvalOptions& opts) {
  MetricReport report;
  for (const auto& [cp, sp] : read_pairs_csv(pairs_csv)) {
    const Image content = load_image(cp);
    const Image style = load_image(sp);
    const Image stylized = infer::stylize(content, style, p, opts.stylize);
    PairMetrics m = evaluate_pair(content, style, stylized, p, opts);
    m.content = cp.string();
    m.style = sp.string();
    report.pairs.push_back(std::move(m));
  }
  return report;
}

std::string metric_csv(const MetricReport& r) {
  std::ostringstream os;
  os << std::setprecision(10) << "content,style,chamfer,sifid,content_proxy\n";
  auto row = [&](const PairMetrics& m) {
    os << m.content << ',' << m.style << ',' << m.chamfer << ',' << m.sifid << ',' << m.content_proxy << '\n';
  };
  for (const auto& m : r.pairs) row(m);
  row(r.mean());
  return os.str();
}

// ---------------------------------------------------------------------------

std::string Resolution::label() const { return std::to_string(width) + "x" + std::to_string(height); }

std::vector<Resolution> parse_resolutions(const std::string& text) {
  std::vector<Resolution> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (item.empty()) continue;
    Resolution r;
    try {
      const auto x = item.find('x');
      size_t used = 0;
      if (x == std::string::npos) {
        r.width = r.height = std::stoi(item, &used);
        if (used != item.size()) throw std::invalid_argument(item);
      } else {
        const std::string w = item.substr(0, x), h = item.substr(x + 1);
        size_t uw = 0, uh = 0;
        r.width = std::stoi(w, &uw);
        r.height = std::stoi(h, &uh);
        if (uw != w.size() || uh != h.size()) throw std::invalid_argument(item);
      }
    } catch (const std::exception&) {
      throw std::invalid_argument("invalid resolution '" + item + "' (use N or WxH)");
    }
    if (r.width < 16 || r.height < 16) throw std::invalid_argument("resolution '" + item + "' is below 16 pixels");
    out.push_back(r);
  }
  if (out.empty()) throw std::invalid_argument("no resolutions given");
  return out;
}

std::vector<Resolution> default_resolutions() { return {{256, 256}, {512, 512}, {1080, 1920}}; }

double steady_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

double median_time(const std::function<void()>& work, int runs, int warmup, const Clock& clock) {
  if (runs < 1) throw std::invalid_argument("median_time: runs must be >= 1");
  for (int i = 0; i < warmup; ++i) work();
  std::vector<double> times;
  times.reserve(static_cast<size_t>(runs));
  for (int i = 0; i < runs; ++i) {
    const double t0 = clock();
    work();
    times.push_back(clock() - t0);
  }
  std::sort(times.begin(), times.end());
  const size_t mid = times.size() / 2;
  return times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

std::vector<TimingRow> bench(const nets::ModelParams& p, const std::vector<Resolution>& resolutions,
                             const BenchOptions& opts) {
  std::vector<TimingRow> rows;
  for (const auto& r : resolutions) {
    TimingRow row;
    row.resolution = r;
    try {
      std::mt19937_64 rng(opts.seed);
      const Image content = synthetic_image(r.height, r.width, rng);
      const Image style = synthetic_image(r.height, r.width, rng);
      row.seconds = median_time([&] { (void)infer::stylize(content, style, p, opts.stylize); }, opts.runs, opts.warmup);
      row.runs = opts.runs;
    } catch (const std::bad_alloc&) {
      row.available = false;
      row.note = "out of memory";
    } catch (const std::length_error&) {
      row.available = false;
      row.note = "out of memory";
    }
    rows.push_back(row);
  }
  return rows;
}

std::string timing_table(const std::vector<TimingRow>& rows, const std::string& method) {
  std::vector<std::string> head{"Method"}, vals{method};
  for (const auto& r : rows) {
    head.push_back(r.resolution.label());
    std::ostringstream os;
    if (r.available) {
      os << std::fixed << std::setprecision(3) << r.seconds;
    } else {
      os << "n/a";
    }
    vals.push_back(os.str());
  }
  std::vector<size_t> width(head.size());
  for (size_t i = 0; i < head.size(); ++i) width[i] = std::max(head[i].size(), vals[i].size());
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) s += " | ";
      s += cells[i] + std::string(width[i] - cells[i].size(), ' ');
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string rule;
  for (size_t i = 0; i < width.size(); ++i) {
    if (i) rule += "-+-";
    rule += std::string(width[i], '-');
  }
  return "Timing (seconds/image)\n" + line(head) + rule + "\n" + line(vals);
}

std::string timing_csv(const std::vector<TimingRow>& rows) {
  std::ostringstream os;
  os << "resolution,width,height,available,median_seconds,runs\n";
  for (const auto& r : rows) {
    os << r.resolution.label() << ',' << r.resolution.width << ',' << r.resolution.height << ','
       << (r.available ? "yes" : "no") << ',' << std::setprecision(9) << r.seconds << ',' << r.runs << '\n';
  }
  return os.str();
}

}  // namespace neat::evalkit
