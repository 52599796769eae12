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

#include "neat/diff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace neat::diff {

namespace {

thread_local bool g_grad_enabled = true;
thread_local bool g_anomaly_enabled = false;

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

NonFiniteError::NonFiniteError(std::string op, bool in_backward)
    : std::runtime_error("non-finite " + std::string(in_backward ? "gradient" : "value") +
                         " produced by op '" + op + "'"),
      op_(std::move(op)),
      in_backward_(in_backward) {}

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(static_cast<size_t>(n), value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("data size " + std::to_string(data.size()) + " does not match shape " +
                                shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

int64_t Tensor::dim(int i) const {
  const int r = rank();
  if (i < 0) i += r;
  if (i < 0 || i >= r) throw std::out_of_range("dimension index out of range for " + shape_str(shape()));
  return node_->shape[static_cast<size_t>(i)];
}

std::span<double> Tensor::mutable_data() {
  if (!node_->is_leaf) throw std::logic_error("mutable_data() on a non-leaf tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::set_requires_grad(bool flag) {
  if (!node_->is_leaf) throw std::logic_error("set_requires_grad() on a non-leaf tensor");
  node_->requires_grad = flag;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from_data(node_->shape, node_->value, false); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw std::invalid_argument("backward() requires a single-element tensor, got shape " +
                                shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; `order` ends up with parents before children.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
  }
  node_->grad_buffer()[0] += 1.0;

  const bool check = g_anomaly_enabled;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->is_leaf || !n->backward_fn) continue;
    n->backward_fn(*n);
    if (check) {
      for (auto& p : n->parents) {
        if (p->requires_grad && !all_finite(p->grad)) throw NonFiniteError(n->op, true);
      }
    }
  }
}

// ---------------------------------------------------------------------------

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool anomaly_enabled() { return g_anomaly_enabled; }
AnomalyGuard::AnomalyGuard() : previous_(g_anomaly_enabled) { g_anomaly_enabled = true; }
AnomalyGuard::~AnomalyGuard() { g_anomaly_enabled = previous_; }

Tensor make_op(std::string name, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
               std::function<void(Node& self)> backward) {
  if (shape_numel(shape) != static_cast<int64_t>(value.size())) {
    throw std::logic_error("op '" + name + "' produced " + std::to_string(value.size()) +
                           " values for shape " + shape_str(shape));
  }
  if (g_anomaly_enabled && !all_finite(value)) throw NonFiniteError(name, false);

  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::move(name);

  bool track = false;
  if (g_grad_enabled) {
    for (const auto& t : inputs) track = track || (t.defined() && t.requires_grad());
  }
  if (track) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents.reserve(inputs.size());
    for (auto& t : inputs) {
      if (t.defined()) node->parents.push_back(t.node_ptr());
    }
    node->backward_fn = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace neat::diff
