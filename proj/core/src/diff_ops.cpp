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

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "neat/diff.hpp"

namespace neat::diff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

Node* raw(const Tensor& t) { return t.node_ptr().get(); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& a, int rank) {
  if (a.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_str(a.shape()));
  }
}

// Unary elementwise op given f(x) and df/dx expressed via (x, y).
template <class F, class DF>
Tensor unary(const char* name, const Tensor& a, F f, DF df) {
  const auto& x = a.data();
  std::vector<double> y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  Node* pa = raw(a);
  return make_op(name, a.shape(), std::move(y), {a}, [pa, df](Node& self) {
    auto& g = pa->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(pa->value[i], self.value[i]);
  });
}

enum class Bin { kAdd, kSub, kMul, kDiv };

Tensor binary(const char* name, Bin kind, const Tensor& a, const Tensor& b) {
  const bool b_scalar = b.numel() == 1 && a.numel() != 1;
  if (!b_scalar) require_same_shape(name, a, b);
  const auto& x = a.data();
  const auto& z = b.data();
  std::vector<double> y(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double bv = b_scalar ? z[0] : z[i];
    switch (kind) {
      case Bin::kAdd: y[i] = x[i] + bv; break;
      case Bin::kSub: y[i] = x[i] - bv; break;
      case Bin::kMul: y[i] = x[i] * bv; break;
      case Bin::kDiv: y[i] = x[i] / bv; break;
    }
  }
  Node* pa = raw(a);
  Node* pb = raw(b);
  return make_op(name, a.shape(), std::move(y), {a, b}, [pa, pb, kind, b_scalar](Node& self) {
    const size_t n = self.grad.size();
    if (pa->requires_grad) {
      auto& ga = pa->grad_buffer();
      for (size_t i = 0; i < n; ++i) {
        const double bv = b_scalar ? pb->value[0] : pb->value[i];
        switch (kind) {
          case Bin::kAdd:
          case Bin::kSub: ga[i] += self.grad[i]; break;
          case Bin::kMul: ga[i] += self.grad[i] * bv; break;
          case Bin::kDiv: ga[i] += self.grad[i] / bv; break;
        }
      }
    }
    if (pb->requires_grad) {
      auto& gb = pb->grad_buffer();
      for (size_t i = 0; i < n; ++i) {
        const size_t j = b_scalar ? 0 : i;
        const double bv = pb->value[j];
        double d = 0.0;
        switch (kind) {
          case Bin::kAdd: d = self.grad[i]; break;
          case Bin::kSub: d = -self.grad[i]; break;
          case Bin::kMul: d = self.grad[i] * pa->value[i]; break;
          case Bin::kDiv: d = -self.grad[i] * pa->value[i] / (bv * bv); break;
        }
        gb[j] += d;
      }
    }
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", Bin::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", Bin::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", Bin::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary("div", Bin::kDiv, a, b); }

Tensor add_scalar(const Tensor& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary("mul_scalar", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary("leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a,
               [](double x) {
                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& a) {
  return unary("softplus", a,
               [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
               [](double x, double) {
                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Node* pa = raw(a);
  return make_op("sum", {1}, {s}, {a}, [pa](Node& self) {
    auto& g = pa->grad_buffer();
    for (double& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw std::invalid_argument("mean of an empty tensor");
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  Node* pa = raw(a);
  return make_op("mean", {1}, {s * inv}, {a}, [pa, inv](Node& self) {
    auto& g = pa->grad_buffer();
    for (double& gi : g) gi += self.grad[0] * inv;
  });
}

Tensor l2_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  const double norm = std::sqrt(s);
  Node* pa = raw(a);
  return make_op("l2_norm", {1}, {norm}, {a}, [pa](Node& self) {
    const double n = self.value[0];
    if (n == 0.0) return;
    auto& g = pa->grad_buffer();
    const double k = self.grad[0] / n;
    for (size_t i = 0; i < g.size(); ++i) g[i] += k * pa->value[i];
  });
}

Tensor logsumexp(const Tensor& a) {
  if (a.numel() == 0) throw std::invalid_argument("logsumexp of an empty tensor");
  const auto& x = a.data();
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  const double out = m + std::log(s);
  Node* pa = raw(a);
  return make_op("logsumexp", {1}, {out}, {a}, [pa](Node& self) {
    auto& g = pa->grad_buffer();
    const double lse = self.value[0];
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * std::exp(pa->value[i] - lse);
  });
}

// ---------------------------------------------------------------------------
// Shape and indexing

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Node* pa = raw(a);
  std::vector<double> v(a.data().begin(), a.data().end());
  return make_op("reshape", std::move(shape), std::move(v), {a}, [pa](Node& self) {
    auto& g = pa->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const int64_t m = a.dim(0), n = a.dim(1);
  std::vector<double> v(a.data().size());
  MapRow(v.data(), n, m) = CMapRow(a.data().data(), m, n).transpose();
  Node* pa = raw(a);
  return make_op("transpose", {n, m}, std::move(v), {a}, [pa, m, n](Node& self) {
    auto& g = pa->grad_buffer();
    MapRow(g.data(), m, n) += CMapRow(self.grad.data(), n, m).transpose();
  });
}

namespace {

// Views shape as [outer, axis, inner].
struct AxisSplit {
  int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
  s.extent = shape[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

int normalize_axis(const char* op, int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw std::invalid_argument(std::string(op) + ": axis out of range");
  return axis;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& ref = parts.front().shape();
  axis = normalize_axis("concat", axis, static_cast<int>(ref.size()));
  Shape out_shape = ref;
  out_shape[static_cast<size_t>(axis)] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (size_t i = 0; ok && i < s.size(); ++i) ok = (static_cast<int>(i) == axis) || s[i] == ref[i];
    if (!ok) {
      throw std::invalid_argument("concat: incompatible shapes " + shape_str(ref) + " and " + shape_str(s));
    }
    out_shape[static_cast<size_t>(axis)] += s[static_cast<size_t>(axis)];
  }
  const AxisSplit os = split_at(out_shape, axis);
  std::vector<double> v(static_cast<size_t>(shape_numel(out_shape)));
  std::vector<Node*> nodes;
  std::vector<int64_t> offsets;
  int64_t off = 0;
  for (const auto& p : parts) {
    const AxisSplit ps = split_at(p.shape(), axis);
    const auto& src = p.data();
    for (int64_t o = 0; o < ps.outer; ++o) {
      std::copy_n(src.begin() + o * ps.extent * ps.inner, ps.extent * ps.inner,
                  v.begin() + (o * os.extent + off) * os.inner);
    }
    nodes.push_back(raw(p));
    offsets.push_back(off);
    off += ps.extent;
  }
  return make_op("concat", out_shape, std::move(v), parts, [nodes, offsets, os, axis](Node& self) {
    for (size_t k = 0; k < nodes.size(); ++k) {
      Node* p = nodes[k];
      if (!p->requires_grad) continue;
      const AxisSplit ps = split_at(p->shape, axis);
      auto& g = p->grad_buffer();
      for (int64_t o = 0; o < ps.outer; ++o) {
        const double* src = self.grad.data() + (o * os.extent + offsets[k]) * os.inner;
        double* dst = g.data() + o * ps.extent * ps.inner;
        for (int64_t i = 0; i < ps.extent * ps.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t length) {
  axis = normalize_axis("slice", axis, a.rank());
  const AxisSplit s = split_at(a.shape(), axis);
  if (start < 0 || length < 0 || start + length > s.extent) {
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                std::to_string(start + length) + ") outside " + shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(axis)] = length;
  std::vector<double> v(static_cast<size_t>(s.outer * length * s.inner));
  const auto& src = a.data();
  for (int64_t o = 0; o < s.outer; ++o) {
    std::copy_n(src.begin() + (o * s.extent + start) * s.inner, length * s.inner,
                v.begin() + o * length * s.inner);
  }
  Node* pa = raw(a);
  return make_op("slice", std::move(out_shape), std::move(v), {a}, [pa, s, start, length](Node& self) {
    auto& g = pa->grad_buffer();
    for (int64_t o = 0; o < s.outer; ++o) {
      double* dst = g.data() + (o * s.extent + start) * s.inner;
      const double* src = self.grad.data() + o * length * s.inner;
      for (int64_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
    }
  });
}

Tensor crop(const Tensor& x, int64_t y0, int64_t x0, int64_t height, int64_t width) {
  require_rank("crop", x, 3);
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (y0 < 0 || x0 < 0 || height <= 0 || width <= 0 || y0 + height > h || x0 + width > w) {
    throw std::invalid_argument("crop: window (" + std::to_string(y0) + "," + std::to_string(x0) + ") " +
                                std::to_string(height) + "x" + std::to_string(width) + " outside " +
                                shape_str(x.shape()));
  }
  std::vector<double> v(static_cast<size_t>(c * height * width));
  const auto& src = x.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t r = 0; r < height; ++r)
      std::copy_n(src.begin() + (ch * h + y0 + r) * w + x0, width, v.begin() + (ch * height + r) * width);
  Node* px = raw(x);
  return make_op("crop", {c, height, width}, std::move(v), {x},
                 [px, c, h, w, y0, x0, height, width](Node& self) {
                   auto& g = px->grad_buffer();
                   for (int64_t ch = 0; ch < c; ++ch)
                     for (int64_t r = 0; r < height; ++r)
                       for (int64_t q = 0; q < width; ++q)
                         g[static_cast<size_t>((ch * h + y0 + r) * w + x0 + q)] +=
                             self.grad[static_cast<size_t>((ch * height + r) * width + q)];
                 });
}

Tensor gather(const Tensor& a, std::span<const int64_t> flat_indices) {
  std::vector<int64_t> idx(flat_indices.begin(), flat_indices.end());
  std::vector<double> v(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.numel()) {
      throw std::invalid_argument("gather: index " + std::to_string(idx[i]) + " outside " + shape_str(a.shape()));
    }
    v[i] = a.data()[static_cast<size_t>(idx[i])];
  }
  Node* pa = raw(a);
  const auto n = static_cast<int64_t>(idx.size());
  return make_op("gather", {n}, std::move(v), {a}, [pa, idx = std::move(idx)](Node& self) {
    auto& g = pa->grad_buffer();
    for (size_t i = 0; i < idx.size(); ++i) g[static_cast<size_t>(idx[i])] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  std::vector<double> v(static_cast<size_t>(m * n));
  MapRow(v.data(), m, n).noalias() = CMapRow(a.data().data(), m, k) * CMapRow(b.data().data(), k, n);
  Node* pa = raw(a);
  Node* pb = raw(b);
  return make_op("matmul", {m, n}, std::move(v), {a, b}, [pa, pb, m, k, n](Node& self) {
    CMapRow go(self.grad.data(), m, n);
    if (pa->requires_grad) {
      MapRow(pa->grad_buffer().data(), m, k).noalias() += go * CMapRow(pb->value.data(), k, n).transpose();
    }
    if (pb->requires_grad) {
      MapRow(pb->grad_buffer().data(), k, n).noalias() += CMapRow(pa->value.data(), m, k).transpose() * go;
    }
  });
}

Tensor softmax(const Tensor& a, int axis) {
  require_rank("softmax", a, 2);
  axis = normalize_axis("softmax", axis, 2);
  const int64_t rows = a.dim(0), cols = a.dim(1);
  // Work in a layout where the softmax axis is contiguous.
  const int64_t groups = axis == 1 ? rows : cols;
  const int64_t len = axis == 1 ? cols : rows;
  auto at = [=](int64_t g, int64_t i) { return axis == 1 ? g * cols + i : i * cols + g; };

  std::vector<double> y(a.data().size());
  const auto& x = a.data();
  for (int64_t g = 0; g < groups; ++g) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < len; ++i) mx = std::max(mx, x[static_cast<size_t>(at(g, i))]);
    double s = 0.0;
    for (int64_t i = 0; i < len; ++i) {
      const auto j = static_cast<size_t>(at(g, i));
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    for (int64_t i = 0; i < len; ++i) y[static_cast<size_t>(at(g, i))] /= s;
  }
  Node* pa = raw(a);
  return make_op("softmax", a.shape(), std::move(y), {a}, [pa, groups, len, at](Node& self) {
    auto& gx = pa->grad_buffer();
    for (int64_t g = 0; g < groups; ++g) {
      double dot = 0.0;
      for (int64_t i = 0; i < len; ++i) {
        const auto j = static_cast<size_t>(at(g, i));
        dot += self.grad[j] * self.value[j];
      }
      for (int64_t i = 0; i < len; ++i) {
        const auto j = static_cast<size_t>(at(g, i));
        gx[j] += self.value[j] * (self.grad[j] - dot);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Spatial helpers

Tensor upsample_nearest2x(const Tensor& x) {
  require_rank("upsample_nearest2x", x, 3);
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int64_t oh = 2 * h, ow = 2 * w;
  std::vector<double> v(static_cast<size_t>(c * oh * ow));
  const auto& src = x.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t r = 0; r < oh; ++r)
      for (int64_t q = 0; q < ow; ++q)
        v[static_cast<size_t>((ch * oh + r) * ow + q)] = src[static_cast<size_t>((ch * h + r / 2) * w + q / 2)];
  Node* px = raw(x);
  return make_op("upsample_nearest2x", {c, oh, ow}, std::move(v), {x}, [px, c, h, w](Node& self) {
    auto& g = px->grad_buffer();
    const int64_t oh = 2 * h, ow = 2 * w;
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t r = 0; r < oh; ++r)
        for (int64_t q = 0; q < ow; ++q)
          g[static_cast<size_t>((ch * h + r / 2) * w + q / 2)] += self.grad[static_cast<size_t>((ch * oh + r) * ow + q)];
  });
}

Tensor avg_pool2d(const Tensor& x, int k) {
  require_rank("avg_pool2d", x, 3);
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (k <= 0 || h % k != 0 || w % k != 0) {
    throw std::invalid_argument("avg_pool2d: window " + std::to_string(k) + " does not tile " + shape_str(x.shape()));
  }
  const int64_t oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  std::vector<double> v(static_cast<size_t>(c * oh * ow), 0.0);
  const auto& src = x.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t r = 0; r < h; ++r)
      for (int64_t q = 0; q < w; ++q)
        v[static_cast<size_t>((ch * oh + r / k) * ow + q / k)] += src[static_cast<size_t>((ch * h + r) * w + q)] * inv;
  Node* px = raw(x);
  return make_op("avg_pool2d", {c, oh, ow}, std::move(v), {x}, [px, c, h, w, k, oh, ow, inv](Node& self) {
    auto& g = px->grad_buffer();
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t r = 0; r < h; ++r)
        for (int64_t q = 0; q < w; ++q)
          g[static_cast<size_t>((ch * h + r) * w + q)] += self.grad[static_cast<size_t>((ch * oh + r / k) * ow + q / k)] * inv;
  });
}

Tensor channel_mean(const Tensor& x) {
  require_rank("channel_mean", x, 3);
  const int64_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  std::vector<double> v(static_cast<size_t>(c));
  const auto& src = x.data();
  for (int64_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += src[static_cast<size_t>(ch * n + i)];
    v[static_cast<size_t>(ch)] = s / static_cast<double>(n);
  }
  Node* px = raw(x);
  return make_op("channel_mean", {c}, std::move(v), {x}, [px, c, n](Node& self) {
    auto& g = px->grad_buffer();
    const double inv = 1.0 / static_cast<double>(n);
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < n; ++i) g[static_cast<size_t>(ch * n + i)] += self.grad[static_cast<size_t>(ch)] * inv;
  });
}

Tensor channel_std(const Tensor& x, double eps) {
  require_rank("channel_std", x, 3);
  const int64_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  std::vector<double> mu(static_cast<size_t>(c)), v(static_cast<size_t>(c));
  const auto& src = x.data();
  for (int64_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += src[static_cast<size_t>(ch * n + i)];
    const double m = s / static_cast<double>(n);
    double q = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = src[static_cast<size_t>(ch * n + i)] - m;
      q += d * d;
    }
    mu[static_cast<size_t>(ch)] = m;
    v[static_cast<size_t>(ch)] = std::sqrt(q / static_cast<double>(n) + eps);
  }
  Node* px = raw(x);
  return make_op("channel_std", {c}, std::move(v), {x}, [px, c, n, mu = std::move(mu)](Node& self) {
    auto& g = px->grad_buffer();
    const double inv = 1.0 / static_cast<double>(n);
    for (int64_t ch = 0; ch < c; ++ch) {
      const double k = self.grad[static_cast<size_t>(ch)] * inv / self.value[static_cast<size_t>(ch)];
      const double m = mu[static_cast<size_t>(ch)];
      for (int64_t i = 0; i < n; ++i) {
        const auto j = static_cast<size_t>(ch * n + i);
        g[j] += k * (px->value[j] - m);
      }
    }
  });
}

Tensor broadcast_channels(const Tensor& v, int64_t height, int64_t width) {
  require_rank("broadcast_channels", v, 1);
  const int64_t c = v.dim(0), n = height * width;
  std::vector<double> out(static_cast<size_t>(c * n));
  for (int64_t ch = 0; ch < c; ++ch)
    std::fill_n(out.begin() + ch * n, n, v.data()[static_cast<size_t>(ch)]);
  Node* pv = raw(v);
  return make_op("broadcast_channels", {c, height, width}, std::move(out), {v}, [pv, c, n](Node& self) {
    auto& g = pv->grad_buffer();
    for (int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i) s += self.grad[static_cast<size_t>(ch * n + i)];
      g[static_cast<size_t>(ch)] += s;
    }
  });
}

}  // namespace neat::diff
