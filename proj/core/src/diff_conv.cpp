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

#include "neat/diff.hpp"

namespace neat::diff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

// Upper bound on im2col buffer size (doubles); larger outputs are processed
// in bands of output rows.
constexpr int64_t kColumnBudget = int64_t{1} << 21;

struct ConvGeometry {
  int64_t channels, height, width;
  int64_t out_channels, kernel;
  int64_t out_height, out_width;
  int stride, pad;
  // For each kernel offset and output coordinate, the source coordinate or -1.
  std::vector<int64_t> row_map;  // [kernel][out_height]
  std::vector<int64_t> col_map;  // [kernel][out_width]

  int64_t patch() const { return channels * kernel * kernel; }
  int64_t band_rows() const {
    const int64_t per_row = std::max<int64_t>(1, out_width * patch());
    return std::clamp<int64_t>(kColumnBudget / per_row, 1, out_height);
  }
};

int64_t source_index(int64_t i, int64_t n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  if (mode == PadMode::kZero) return -1;
  if (n == 1) return 0;
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

ConvGeometry make_geometry(const Tensor& x, const Tensor& w, int stride, int pad, PadMode mode) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(2) != w.dim(3) || w.dim(1) != x.dim(0)) {
    throw std::invalid_argument("conv2d: incompatible input " + shape_str(x.shape()) + " and weight " +
                                shape_str(w.shape()));
  }
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: stride must be >= 1 and pad >= 0");
  ConvGeometry g{};
  g.channels = x.dim(0);
  g.height = x.dim(1);
  g.width = x.dim(2);
  g.out_channels = w.dim(0);
  g.kernel = w.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (mode == PadMode::kReflect && (pad >= g.height || pad >= g.width) && !(g.height == 1 && g.width == 1)) {
    throw std::invalid_argument("conv2d: reflect pad " + std::to_string(pad) + " too large for " +
                                shape_str(x.shape()));
  }
  const int64_t span_h = g.height + 2 * pad - g.kernel;
  const int64_t span_w = g.width + 2 * pad - g.kernel;
  if (span_h < 0 || span_w < 0) {
    throw std::invalid_argument("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  g.out_height = span_h / stride + 1;
  g.out_width = span_w / stride + 1;
  g.row_map.resize(static_cast<size_t>(g.kernel * g.out_height));
  g.col_map.resize(static_cast<size_t>(g.kernel * g.out_width));
  for (int64_t k = 0; k < g.kernel; ++k) {
    for (int64_t o = 0; o < g.out_height; ++o)
      g.row_map[static_cast<size_t>(k * g.out_height + o)] = source_index(o * stride + k - pad, g.height, mode);
    for (int64_t o = 0; o < g.out_width; ++o)
      g.col_map[static_cast<size_t>(k * g.out_width + o)] = source_index(o * stride + k - pad, g.width, mode);
  }
  return g;
}

// cols is [patch, rows*out_width] for output rows [row0, row0+rows).
void im2col(const ConvGeometry& g, const double* x, int64_t row0, int64_t rows, double* cols) {
  const int64_t n = rows * g.out_width;
  for (int64_t c = 0; c < g.channels; ++c) {
    const double* plane = x + c * g.height * g.width;
    for (int64_t ki = 0; ki < g.kernel; ++ki) {
      for (int64_t kj = 0; kj < g.kernel; ++kj) {
        double* dst = cols + ((c * g.kernel + ki) * g.kernel + kj) * n;
        const int64_t* cmap = &g.col_map[static_cast<size_t>(kj * g.out_width)];
        for (int64_t r = 0; r < rows; ++r) {
          const int64_t iy = g.row_map[static_cast<size_t>(ki * g.out_height + row0 + r)];
          double* out = dst + r * g.out_width;
          if (iy < 0) {
            std::fill_n(out, g.out_width, 0.0);
            continue;
          }
          const double* src = plane + iy * g.width;
          for (int64_t ox = 0; ox < g.out_width; ++ox) {
            const int64_t ix = cmap[ox];
            out[ox] = ix < 0 ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* cols, int64_t row0, int64_t rows, double* dx) {
  const int64_t n = rows * g.out_width;
  for (int64_t c = 0; c < g.channels; ++c) {
    double* plane = dx + c * g.height * g.width;
    for (int64_t ki = 0; ki < g.kernel; ++ki) {
      for (int64_t kj = 0; kj < g.kernel; ++kj) {
        const double* src = cols + ((c * g.kernel + ki) * g.kernel + kj) * n;
        const int64_t* cmap = &g.col_map[static_cast<size_t>(kj * g.out_width)];
        for (int64_t r = 0; r < rows; ++r) {
          const int64_t iy = g.row_map[static_cast<size_t>(ki * g.out_height + row0 + r)];
          if (iy < 0) continue;
          double* dst = plane + iy * g.width;
          const double* in = src + r * g.out_width;
          for (int64_t ox = 0; ox < g.out_width; ++ox) {
            const int64_t ix = cmap[ox];
            if (ix >= 0) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad, PadMode mode) {
  auto geo = std::make_shared<ConvGeometry>(make_geometry(x, weight, stride, pad, mode));
  const ConvGeometry& g = *geo;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.out_channels)) {
    throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) + " does not match weight " +
                                shape_str(weight.shape()));
  }
  const int64_t n_out = g.out_height * g.out_width;
  std::vector<double> out(static_cast<size_t>(g.out_channels * n_out));
  MapRow out_m(out.data(), g.out_channels, n_out);
  CMapRow w_m(weight.data().data(), g.out_channels, g.patch());

  const int64_t band = g.band_rows();
  std::vector<double> cols(static_cast<size_t>(g.patch() * band * g.out_width));
  for (int64_t row0 = 0; row0 < g.out_height; row0 += band) {
    const int64_t rows = std::min(band, g.out_height - row0);
    const int64_t n = rows * g.out_width;
    im2col(g, x.data().data(), row0, rows, cols.data());
    out_m.middleCols(row0 * g.out_width, n).noalias() = w_m * CMapRow(cols.data(), g.patch(), n);
  }
  if (bias.defined()) {
    for (int64_t o = 0; o < g.out_channels; ++o) out_m.row(o).array() += bias.data()[static_cast<size_t>(o)];
  }

  Node* px = x.node_ptr().get();
  Node* pw = weight.node_ptr().get();
  Node* pb = bias.defined() ? bias.node_ptr().get() : nullptr;
  return make_op("conv2d", {g.out_channels, g.out_height, g.out_width}, std::move(out), {x, weight, bias},
                 [px, pw, pb, geo](Node& self) {
                   const ConvGeometry& g = *geo;
                   const int64_t n_out = g.out_height * g.out_width;
                   CMapRow go(self.grad.data(), g.out_channels, n_out);
                   if (pb && pb->requires_grad) {
                     auto& gb = pb->grad_buffer();
                     for (int64_t o = 0; o < g.out_channels; ++o) gb[static_cast<size_t>(o)] += go.row(o).sum();
                   }
                   const bool need_w = pw->requires_grad;
                   const bool need_x = px->requires_grad;
                   if (!need_w && !need_x) return;
                   const int64_t band = g.band_rows();
                   std::vector<double> cols(static_cast<size_t>(g.patch() * band * g.out_width));
                   CMapRow w_m(pw->value.data(), g.out_channels, g.patch());
                   double* dx = need_x ? px->grad_buffer().data() : nullptr;
                   double* dw = need_w ? pw->grad_buffer().data() : nullptr;
                   for (int64_t row0 = 0; row0 < g.out_height; row0 += band) {
                     const int64_t rows = std::min(band, g.out_height - row0);
                     const int64_t n = rows * g.out_width;
                     auto go_band = go.middleCols(row0 * g.out_width, n);
                     if (need_w) {
                       im2col(g, px->value.data(), row0, rows, cols.data());
                       MapRow(dw, g.out_channels, g.patch()).noalias() +=
                           go_band * CMapRow(cols.data(), g.patch(), n).transpose();
                     }
                     if (need_x) {
                       MapRow(cols.data(), g.patch(), n).noalias() = w_m.transpose() * go_band;
                       col2im(g, cols.data(), row0, rows, dx);
                     }
                   }
                 });
}

}  // namespace neat::diff
