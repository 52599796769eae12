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
#include <string>
#include <vector>

#include "neat/diff.hpp"

namespace neat::diff {

struct GradCheckOptions {
  double tolerance = 1e-5;
  double step = 1e-5;
  int max_coords = 64;
  uint64_t seed = 0;
  // Denominator floor for the relative error, so coordinates whose true
  // derivative is ~0 are judged on absolute error instead.
  double abs_floor = 1e-7;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  int coords_checked = 0;
  std::string worst_param;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  /// Non-empty when evaluation failed outright (e.g. a non-finite op).
  std::string failure;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Compares reverse-mode gradients of `fn` with central differences on up to
/// `max_coords` randomly chosen coordinates across `params`. `fn` must rebuild
/// its graph on every call and return a single-element tensor.
GradCheckReport grad_check(const std::function<Tensor()>& fn, const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options = {});

}  // namespace neat::diff
