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

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Reverse-mode differentiation over dense double arrays.
//
// A Tensor is a shared handle to a graph node. Ops record their parents and a
// backward closure while grad mode is on and at least one input requires a
// gradient; otherwise they produce plain value nodes. Graphs are confined to
// the thread that built them.

namespace neat::diff {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& shape);
int64_t shape_numel(const Shape& shape);

/// Raised when anomaly checking is on and an op produces a non-finite value.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::string op, bool in_backward);
  const std::string& op() const noexcept { return op_; }
  bool in_backward() const noexcept { return in_backward_; }

 private:
  std::string op_;
  bool in_backward_;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool is_leaf = true;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads self.grad and accumulates into parents' grads.
  std::function<void(Node& self)> backward_fn;

  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t dim(int i) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  std::span<const double> data() const { return node_->value; }
  // Direct writes bypass the graph; only valid on leaves.
  std::span<double> mutable_data();
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  bool is_leaf() const { return node_->is_leaf; }
  const std::string& op_name() const { return node_->op; }

  void zero_grad();
  /// Value copy cut from the graph.
  Tensor detach() const;
  /// Populates grads of every reachable node that requires one. Leaf grads
  /// accumulate across calls; interior grads are reset per call.
  void backward() const;

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// ---------------------------------------------------------------------------
// Modes

bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool anomaly_enabled();
class AnomalyGuard {
 public:
  AnomalyGuard();
  ~AnomalyGuard();
  AnomalyGuard(const AnomalyGuard&) = delete;
  AnomalyGuard& operator=(const AnomalyGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. Records `backward` only when grad mode is on and some
/// input requires a gradient. Extension point for fused ops.
Tensor make_op(std::string name, Shape shape, std::vector<double> value,
               std::vector<Tensor> inputs, std::function<void(Node& self)> backward);

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b);  // b may be a scalar tensor
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softplus(const Tensor& a);
/// Gradient passes where lo <= a <= hi, so values resting on a bound can move off it.
Tensor clamp(const Tensor& a, double lo, double hi);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Euclidean norm over all elements. Gradient at the origin is taken as zero.
Tensor l2_norm(const Tensor& a);
Tensor logsumexp(const Tensor& a);

// ---------------------------------------------------------------------------
// Shape and indexing

Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);  // rank 2
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t length);
/// Spatial crop of a [C,H,W] tensor.
Tensor crop(const Tensor& x, int64_t y0, int64_t x0, int64_t height, int64_t width);
/// Flat gather into a rank-1 tensor; repeated indices accumulate on backward.
Tensor gather(const Tensor& a, std::span<const int64_t> flat_indices);

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
/// Softmax of a rank-2 tensor along `axis` (0 or 1).
Tensor softmax(const Tensor& a, int axis);

// ---------------------------------------------------------------------------
// Image-shaped ops, all on single [C,H,W] tensors

enum class PadMode { kZero, kReflect };

/// weight [O,C,k,k], bias [O] or undefined. Reflect padding mirrors without
/// repeating the edge sample and requires pad < H,W.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad,
              PadMode mode);
Tensor upsample_nearest2x(const Tensor& x);
/// Non-overlapping k x k mean pooling; H and W must be divisible by k.
Tensor avg_pool2d(const Tensor& x, int k);
/// Per-channel spatial mean: [C,H,W] -> [C].
Tensor channel_mean(const Tensor& x);
/// Per-channel spatial std: sqrt(var + eps) with the population variance.
Tensor channel_std(const Tensor& x, double eps = 1e-8);
/// [C] -> [C,H,W] by repetition.
Tensor broadcast_channels(const Tensor& v, int64_t height, int64_t width);

}  // namespace neat::diff
